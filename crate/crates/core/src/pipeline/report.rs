//! Report records and run statistics.

use serde::{Deserialize, Serialize};

use crate::classify::ConfusionMatrix;
use crate::esn::EsnConfig;
use crate::rae::Pooling;

use super::config::RunConfig;

/// Mean, sample standard deviation (0 for a single value), min and max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Summary {
            count: n,
            mean,
            std,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolingScore {
    pub pooling: Pooling,
    pub ca: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub genome: Vec<f64>,
    pub config: EsnConfig,
    pub objectives_pre: Vec<f64>,
    pub objectives_post: Vec<f64>,
    /// Primary pooling.
    pub pooling: Pooling,
    /// Test accuracy with `pooling`.
    pub ca: f64,
    pub ca_by_pooling: Vec<PoolingScore>,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTimings {
    pub architecture_s: f64,
    pub weights_s: f64,
    pub classification_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    /// `None` for a completed run.
    pub error: Option<String>,
    pub solutions: Vec<SolutionRecord>,
    pub best_solution: Option<usize>,
    pub best_ca: Option<f64>,
    /// Best accuracy over the front for every evaluated pooling.
    pub best_by_pooling: Vec<PoolingScore>,
    pub evaluation_failures: usize,
    pub timings: RunTimings,
}

impl RunRecord {
    pub fn failed(run: usize, seed: u64, error: String) -> Self {
        RunRecord {
            run,
            seed,
            error: Some(error),
            solutions: Vec::new(),
            best_solution: None,
            best_ca: None,
            best_by_pooling: Vec::new(),
            evaluation_failures: 0,
            timings: RunTimings::default(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub train_patterns: usize,
    pub test_patterns: usize,
    pub length: usize,
    pub channels: usize,
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolingSummary {
    pub pooling: Pooling,
    pub summary: Summary,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportTimings {
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontReport {
    pub schema_version: u32,
    pub config: RunConfig,
    pub config_digest: String,
    pub dataset: DatasetSummary,
    pub runs: Vec<RunRecord>,
    /// Best-of-front accuracy over completed runs, primary pooling.
    pub summary: Option<Summary>,
    pub summary_by_pooling: Vec<PoolingSummary>,
    /// Completed run with the highest best accuracy (lowest index on ties).
    pub best_run: Option<usize>,
    pub incomplete_runs: Vec<usize>,
    pub timings: ReportTimings,
}

/// Index of the largest value, the first one on ties.
pub fn first_max(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Per-pooling summaries of the best-of-front accuracy over runs.
pub fn summarize_poolings(runs: &[RunRecord], poolings: &[Pooling]) -> Vec<PoolingSummary> {
    poolings
        .iter()
        .filter_map(|&pooling| {
            let values: Vec<f64> = runs
                .iter()
                .filter(|r| r.is_complete())
                .filter_map(|r| r.best_by_pooling.iter().find(|s| s.pooling == pooling).map(|s| s.ca))
                .collect();
            Summary::of(&values).map(|summary| PoolingSummary { pooling, summary })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        assert!(Summary::of(&[]).is_none());
        let one = Summary::of(&[0.9]).unwrap();
        assert_eq!((one.mean, one.std, one.min, one.max), (0.9, 0.0, 0.9, 0.9));
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!((s.min, s.max), (1.0, 4.0));
    }

    #[test]
    fn first_max_prefers_lowest_index() {
        assert_eq!(first_max([0.5, 0.9, 0.9, 0.1]), Some(1));
        assert_eq!(first_max(std::iter::empty()), None);
    }
}
