//! The pipeline split into separately runnable stages that hand over
//! through files in one output directory.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::ConfusionMatrix;
use crate::error::{Error, Result};
use crate::mopso::TraceRecord;
use crate::rae::{self, FeatureSet};

use super::config::RunConfig;
use super::front::{self, FrontFile, NetworkFile, StoredNetwork, SCHEMA_VERSION};
use super::report::FrontReport;
use super::run::{self, WeightTraceRecord};

pub const FRONT_JSON: &str = "front.json";
pub const FRONT_CSV: &str = "front.csv";
pub const TRACE: &str = "trace.jsonl";
pub const WEIGHTS_TRACE: &str = "weights_trace.jsonl";
pub const NETWORKS: &str = "networks.json";
pub const FEATURES: &str = "features.json";
pub const CLASSIFICATION: &str = "classification.json";
pub const REPORT: &str = "report.json";

fn confusion_file(dataset: &str) -> String {
    format!("confusion_{dataset}.csv")
}

fn check_digest(config: &RunConfig, digest: &str, what: &str) {
    if config.digest() != digest {
        log::warn!("{what} was produced under a different configuration");
    }
}

/// Level 1 of run 0: writes the front and the archive trace.
pub fn evolve_arch(config: &RunConfig, out: &Path) -> Result<FrontFile> {
    config.validate()?;
    let ds = run::prepare_dataset(config)?;
    let seed = run::run_seed(config.master_seed, 0);
    let outcome = run::evolve_architecture(config, &ds, seed)?;
    let front = FrontFile::from_archive(&outcome.archive, &config.digest(), seed);
    front::write_text(&out.join(FRONT_JSON), &front.to_json())?;
    front::write_text(
        &out.join(FRONT_CSV),
        &front.to_csv(config.arch_bounds().dim(), config.mode.num_objectives()),
    )?;
    front::write_text(&out.join(TRACE), &front::to_json_lines(&outcome.trace))?;
    Ok(front)
}

/// Level 2 for every member of a stored front; rewrites the front with the
/// refined objectives and stores the networks.
pub fn evolve_weights(config: &RunConfig, front_path: &Path, out: &Path) -> Result<FrontFile> {
    config.validate()?;
    let text = std::fs::read_to_string(front_path).map_err(|e| Error::io(front_path, e))?;
    let mut front = FrontFile::from_json(&text)?;
    check_digest(config, &front.config_digest, "front");
    let ds = run::prepare_dataset(config)?;
    let refined = front
        .entries
        .par_iter()
        .enumerate()
        .map(|(j, e)| {
            let esn = run::decode_entry(config, &ds, &e.genome, front.seed)?;
            run::refine(config, &ds.train, &esn, front.seed, j)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut trace = Vec::new();
    for (j, (e, out)) in front.entries.iter_mut().zip(&refined).enumerate() {
        e.objectives_post = Some(run::post_objectives(&e.objectives_pre, out.rmse));
        trace.extend(out.trace.iter().enumerate().map(|(it, &v)| WeightTraceRecord {
            solution: j,
            iteration: it,
            best_rmse: v,
        }));
    }
    let networks = NetworkFile {
        schema_version: SCHEMA_VERSION,
        config_digest: front.config_digest.clone(),
        networks: refined.iter().map(|o| StoredNetwork::from_network(&o.network)).collect(),
    };
    front::write_text(&out.join(FRONT_JSON), &front.to_json())?;
    front::write_text(
        &out.join(FRONT_CSV),
        &front.to_csv(config.arch_bounds().dim(), config.mode.num_objectives()),
    )?;
    front::write_text(&out.join(WEIGHTS_TRACE), &front::to_json_lines(&trace))?;
    front::write_json(&out.join(NETWORKS), &networks)?;
    Ok(front)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFile {
    pub schema_version: u32,
    pub dataset: String,
    pub network: usize,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub train: FeatureSet,
    pub test: FeatureSet,
}

/// Pooled reservoir features of one stored network for both splits.
pub fn extract(config: &RunConfig, networks_path: &Path, network: usize, out: &Path) -> Result<FeatureFile> {
    config.validate()?;
    let file: NetworkFile = front::read_json(networks_path)?;
    check_digest(config, &file.config_digest, "network file");
    let stored = file.networks.get(network).ok_or_else(|| {
        Error::Config(format!("network {network} requested, file holds {}", file.networks.len()))
    })?;
    let net = stored.to_network()?;
    let ds = run::prepare_dataset(config)?;
    let features = FeatureFile {
        schema_version: SCHEMA_VERSION,
        dataset: ds.name.clone(),
        network,
        num_classes: ds.num_classes,
        class_names: ds.class_names.clone(),
        train: rae::extract_features(&net, &ds.train, config.pooling)?,
        test: rae::extract_features(&net, &ds.test, config.pooling)?,
    };
    front::write_json(&out.join(FEATURES), &features)?;
    Ok(features)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub schema_version: u32,
    pub dataset: String,
    pub network: usize,
    pub classifier: String,
    pub ca: f64,
    pub predictions: Vec<usize>,
    pub confusion: ConfusionMatrix,
}

/// Train the configured classifier on stored features and score the test
/// split.
pub fn classify(config: &RunConfig, features_path: &Path, out: &Path) -> Result<ClassificationReport> {
    let f: FeatureFile = front::read_json(features_path)?;
    let scored = run::classify_features(&f.train, &f.test, f.num_classes, config)?;
    let report = ClassificationReport {
        schema_version: SCHEMA_VERSION,
        dataset: f.dataset.clone(),
        network: f.network,
        classifier: config.classifier.kind.to_string(),
        ca: scored.ca,
        predictions: scored.predictions,
        confusion: scored.confusion,
    };
    front::write_json(&out.join(CLASSIFICATION), &report)?;
    front::write_text(&out.join(confusion_file(&f.dataset)), &report.confusion.to_csv(&f.class_names))?;
    Ok(report)
}

fn csv_row(cells: impl IntoIterator<Item = String>) -> String {
    let mut s = cells.into_iter().collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

/// Plot-ready CSV tables from whatever artifacts `dir` holds; returns the
/// written file names.
pub fn export_plots(dir: &Path, out: &Path) -> Result<Vec<String>> {
    let mut written = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<()> {
        front::write_text(&out.join(name), &text)?;
        written.push(name.to_string());
        Ok(())
    };

    let trace_path = dir.join(TRACE);
    if trace_path.is_file() {
        let trace: Vec<TraceRecord> = front::read_json_lines(&trace_path)?;
        let m = trace.iter().flat_map(|t| t.front.first()).map(Vec::len).next().unwrap_or(0);
        let mut s = csv_row(["iteration".into(), "point".into()].into_iter().chain((0..m).map(|i| format!("f{i}"))));
        for t in &trace {
            for (k, p) in t.front.iter().enumerate() {
                s.push_str(&csv_row(
                    [t.iteration.to_string(), k.to_string()]
                        .into_iter()
                        .chain(p.iter().map(f64::to_string)),
                ));
            }
        }
        emit("front_evolution.csv", s)?;
    }

    let weights_path = dir.join(WEIGHTS_TRACE);
    if weights_path.is_file() {
        let trace: Vec<WeightTraceRecord> = front::read_json_lines(&weights_path)?;
        let mut s = String::from("solution,iteration,best_rmse\n");
        for r in &trace {
            let _ = writeln!(s, "{},{},{}", r.solution, r.iteration, r.best_rmse);
        }
        emit("weights_convergence.csv", s)?;
    }

    let front_path = dir.join(FRONT_JSON);
    if front_path.is_file() {
        let text = std::fs::read_to_string(&front_path).map_err(|e| Error::io(&front_path, e))?;
        let f = FrontFile::from_json(&text)?;
        let m = f.entries.first().map_or(0, |e| e.objectives_pre.len());
        let mut s = csv_row(
            std::iter::once("solution".to_string())
                .chain((0..m).map(|i| format!("pre_f{i}")))
                .chain((0..m).map(|i| format!("post_f{i}")))
                .chain(std::iter::once("ca".to_string())),
        );
        for (j, e) in f.entries.iter().enumerate() {
            let post = e.objectives_post.as_deref().unwrap_or(&[]);
            s.push_str(&csv_row(
                std::iter::once(j.to_string())
                    .chain(e.objectives_pre.iter().map(f64::to_string))
                    .chain((0..m).map(|i| post.get(i).map(f64::to_string).unwrap_or_default()))
                    .chain(std::iter::once(e.ca.map(|v| v.to_string()).unwrap_or_default())),
            ));
        }
        emit("front_pre_post.csv", s)?;
    }

    let report_path = dir.join(REPORT);
    if report_path.is_file() {
        let report: FrontReport = front::read_json(&report_path)?;
        let poolings = report.config.poolings();
        let mut s = csv_row(
            ["run".to_string(), "best_ca".to_string()]
                .into_iter()
                .chain(poolings.iter().map(|p| format!("ca_{p}"))),
        );
        for r in &report.runs {
            s.push_str(&csv_row(
                [r.run.to_string(), r.best_ca.map(|v| v.to_string()).unwrap_or_default()]
                    .into_iter()
                    .chain(poolings.iter().map(|p| {
                        r.best_by_pooling
                            .iter()
                            .find(|s| s.pooling == *p)
                            .map(|s| s.ca.to_string())
                            .unwrap_or_default()
                    })),
            ));
        }
        emit("run_accuracy.csv", s)?;

        let mut s = String::from("run,solution,ca,rmse_pre,rmse_post\n");
        for r in &report.runs {
            for (j, sol) in r.solutions.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{j},{},{},{}",
                    r.run, sol.ca, sol.objectives_pre[0], sol.objectives_post[0]
                );
            }
        }
        emit("solution_accuracy.csv", s)?;

        let mut s = String::from("run,architecture_s,weights_s,classification_s\n");
        for r in &report.runs {
            let t = &r.timings;
            let _ = writeln!(s, "{},{},{},{}", r.run, t.architecture_s, t.weights_s, t.classification_s);
        }
        emit("timings.csv", s)?;
    }

    if written.is_empty() {
        return Err(Error::Data(format!("{} holds no pipeline artifacts", dir.display())));
    }
    Ok(written)
}
