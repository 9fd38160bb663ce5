//! The two-level pipeline: architecture search, weight refinement of every
//! front member, feature extraction and classification, repeated over
//! seeded runs; plus the unevolved baselines and the noise sweep.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{self, ConfusionMatrix};
use crate::error::{Error, Result};
use crate::esn::{build_network, EsnConfig, EsnNetwork};
use crate::mopso::{self, MopsoOutcome, TraceRecord};
use crate::pso_weights::{self, WeightPsoOutcome};
use crate::rae::{self, Dataset, FeatureSet, Pattern, Pooling};
use crate::rng::derive_seed;

use super::config::RunConfig;
use super::data;
use super::front::{self, FrontEntry, FrontFile, NetworkFile, StoredNetwork, SCHEMA_VERSION};
use super::report::{
    first_max, summarize_poolings, DatasetSummary, FrontReport, PoolingScore, PoolingSummary, ReportTimings,
    RunRecord, RunTimings, SolutionRecord, Summary,
};

const STREAM_RUN: u64 = 10;
const STREAM_NOISE: u64 = 11;
const STREAM_LEVEL2: u64 = 12;
const STREAM_BASELINE: u64 = 13;

pub fn run_seed(master_seed: u64, run: usize) -> u64 {
    derive_seed(master_seed, &[STREAM_RUN, run as u64])
}

/// Load the configured dataset and, if requested, add noise to both splits.
pub fn prepare_dataset(config: &RunConfig) -> Result<Dataset> {
    let ds = data::load_dataset(&config.dataset)?;
    match config.noise_snr_db {
        Some(snr) => data::add_noise(&ds, snr, derive_seed(config.master_seed, &[STREAM_NOISE])),
        None => Ok(ds),
    }
}

pub fn dataset_summary(ds: &Dataset) -> DatasetSummary {
    let (length, channels) = ds.shape();
    DatasetSummary {
        name: ds.name.clone(),
        train_patterns: ds.train.len(),
        test_patterns: ds.test.len(),
        length,
        channels,
        classes: ds.class_names.clone(),
    }
}

pub fn template(config: &RunConfig, ds: &Dataset) -> EsnConfig {
    config.esn.template(ds.shape().1)
}

pub fn evolve_architecture(config: &RunConfig, ds: &Dataset, seed: u64) -> Result<MopsoOutcome<EsnConfig>> {
    mopso::run_architecture_search(
        &ds.train,
        &config.arch_bounds(),
        &template(config, ds),
        config.mode,
        &config.mopso,
        seed,
    )
}

/// Decoded configuration of a stored genome, with the run's reservoir seed.
pub fn decode_entry(config: &RunConfig, ds: &Dataset, genome: &[f64], seed: u64) -> Result<EsnConfig> {
    let cfg = mopso::decode(genome, &config.arch_bounds(), &template(config, ds))?;
    Ok(EsnConfig {
        rng_seed: mopso::evaluation_seed(seed),
        ..cfg
    })
}

/// Level-2 refinement of one front member.
pub fn refine(config: &RunConfig, train: &[Pattern], esn: &EsnConfig, seed: u64, index: usize) -> Result<WeightPsoOutcome> {
    let net = build_network(esn)?;
    pso_weights::run_weight_pso(&net, train, &config.pso, derive_seed(seed, &[STREAM_LEVEL2, index as u64]))
}

/// Level-1 objectives with the reconstruction error replaced by the
/// refined one; the complexity objectives are untouched by level 2.
pub fn post_objectives(pre: &[f64], rmse: f64) -> Vec<f64> {
    let mut post = pre.to_vec();
    post[0] = rmse;
    post
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub pooling: Pooling,
    pub ca: f64,
    pub confusion: ConfusionMatrix,
    pub predictions: Vec<usize>,
}

pub fn classify_features(train: &FeatureSet, test: &FeatureSet, num_classes: usize, config: &RunConfig) -> Result<Scored> {
    let model = classify::train_classifier(train, num_classes, &config.classifier)?;
    let predictions = classify::predict(&model, &test.features)?;
    Ok(Scored {
        pooling: train.pooling,
        ca: classify::accuracy(&predictions, &test.labels)?,
        confusion: classify::confusion_matrix(&predictions, &test.labels, num_classes)?,
        predictions,
    })
}

/// Test accuracy of the features of `net` under every configured pooling,
/// the primary one first.
pub fn score_network(net: &EsnNetwork, ds: &Dataset, config: &RunConfig) -> Result<Vec<Scored>> {
    if ds.test.is_empty() {
        return Err(Error::Data(format!("{}: empty test split", ds.name)));
    }
    config
        .poolings()
        .into_iter()
        .map(|pooling| {
            let train = rae::extract_features(net, &ds.train, pooling)?;
            let test = rae::extract_features(net, &ds.test, pooling)?;
            classify_features(&train, &test, ds.num_classes, config)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTraceRecord {
    pub solution: usize,
    pub iteration: usize,
    pub best_rmse: f64,
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub record: RunRecord,
    pub front: FrontFile,
    pub trace: Vec<TraceRecord>,
    pub weight_trace: Vec<WeightTraceRecord>,
    pub networks: Vec<StoredNetwork>,
    pub num_objectives: usize,
    pub genome_len: usize,
}

pub fn run_once(config: &RunConfig, ds: &Dataset, run: usize) -> Result<RunArtifacts> {
    let seed = run_seed(config.master_seed, run);
    let digest = config.digest();

    let t0 = Instant::now();
    let outcome = evolve_architecture(config, ds, seed)?;
    let architecture_s = t0.elapsed().as_secs_f64();
    log::info!(
        "run {run}: architecture search kept {} solutions ({} failed evaluations)",
        outcome.archive.len(),
        outcome.failures.len()
    );

    let t1 = Instant::now();
    let refined = outcome
        .archive
        .entries()
        .par_iter()
        .enumerate()
        .map(|(j, entry)| refine(config, &ds.train, &entry.meta, seed, j))
        .collect::<Result<Vec<_>>>()?;
    for (j, out) in refined.iter().enumerate() {
        log::info!("run {run}: solution {j} RMSE {:e} -> {:e}", out.initial_rmse, out.rmse);
    }
    let weights_s = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let mut solutions = Vec::with_capacity(refined.len());
    let mut front = FrontFile::from_archive(&outcome.archive, &digest, seed);
    let mut weight_trace = Vec::new();
    let mut networks = Vec::with_capacity(refined.len());
    for (j, (entry, out)) in outcome.archive.entries().iter().zip(&refined).enumerate() {
        let scores = score_network(&out.network, ds, config)?;
        let post = post_objectives(&entry.objectives, out.rmse);
        front.entries[j] = FrontEntry {
            genome: entry.position.clone(),
            objectives_pre: entry.objectives.clone(),
            objectives_post: Some(post.clone()),
            ca: Some(scores[0].ca),
        };
        weight_trace.extend(out.trace.iter().enumerate().map(|(it, &v)| WeightTraceRecord {
            solution: j,
            iteration: it,
            best_rmse: v,
        }));
        networks.push(StoredNetwork::from_network(&out.network));
        solutions.push(SolutionRecord {
            genome: entry.position.clone(),
            config: entry.meta.clone(),
            objectives_pre: entry.objectives.clone(),
            objectives_post: post,
            pooling: scores[0].pooling,
            ca: scores[0].ca,
            ca_by_pooling: scores.iter().map(|s| PoolingScore { pooling: s.pooling, ca: s.ca }).collect(),
            confusion: scores[0].confusion.clone(),
        });
    }
    let classification_s = t2.elapsed().as_secs_f64();

    let best_solution = first_max(solutions.iter().map(|s| s.ca));
    let best_by_pooling = config
        .poolings()
        .into_iter()
        .enumerate()
        .filter_map(|(k, pooling)| {
            solutions
                .iter()
                .map(|s| s.ca_by_pooling[k].ca)
                .reduce(f64::max)
                .map(|ca| PoolingScore { pooling, ca })
        })
        .collect();
    let record = RunRecord {
        run,
        seed,
        error: None,
        best_solution,
        best_ca: best_solution.map(|i| solutions[i].ca),
        best_by_pooling,
        solutions,
        evaluation_failures: outcome.failures.len(),
        timings: RunTimings {
            architecture_s,
            weights_s,
            classification_s,
        },
    };
    Ok(RunArtifacts {
        record,
        front,
        trace: outcome.trace,
        weight_trace,
        networks,
        num_objectives: config.mode.num_objectives(),
        genome_len: config.arch_bounds().dim(),
    })
}

/// All runs of the configuration. A failing run is recorded and skipped.
pub fn run_pipeline(config: &RunConfig) -> Result<(FrontReport, Vec<Option<RunArtifacts>>)> {
    config.validate()?;
    let start = Instant::now();
    let ds = prepare_dataset(config)?;
    let mut runs = Vec::with_capacity(config.num_runs);
    let mut artifacts = Vec::with_capacity(config.num_runs);
    for r in 0..config.num_runs {
        match run_once(config, &ds, r) {
            Ok(a) => {
                runs.push(a.record.clone());
                artifacts.push(Some(a));
            }
            Err(e) => {
                log::error!("run {r} failed: {e}");
                runs.push(RunRecord::failed(r, run_seed(config.master_seed, r), e.to_string()));
                artifacts.push(None);
            }
        }
    }
    let best: Vec<f64> = runs.iter().filter_map(|r| r.best_ca).collect();
    let best_run = first_max(runs.iter().map(|r| r.best_ca.unwrap_or(f64::NEG_INFINITY)))
        .filter(|&i| runs[i].best_ca.is_some());
    let report = FrontReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        config_digest: config.digest(),
        dataset: dataset_summary(&ds),
        summary: Summary::of(&best),
        summary_by_pooling: summarize_poolings(&runs, &config.poolings()),
        best_run,
        incomplete_runs: runs.iter().filter(|r| !r.is_complete()).map(|r| r.run).collect(),
        runs,
        timings: ReportTimings {
            total_s: start.elapsed().as_secs_f64(),
        },
    };
    Ok((report, artifacts))
}

/// Write the files of one run into `dir`.
pub fn write_run_outputs(dir: &Path, a: &RunArtifacts, dataset: &DatasetSummary) -> Result<()> {
    front::write_text(&dir.join("front.json"), &a.front.to_json())?;
    front::write_text(&dir.join("front.csv"), &a.front.to_csv(a.genome_len, a.num_objectives))?;
    front::write_text(&dir.join("trace.jsonl"), &front::to_json_lines(&a.trace))?;
    front::write_text(&dir.join("weights_trace.jsonl"), &front::to_json_lines(&a.weight_trace))?;
    front::write_json(
        &dir.join("networks.json"),
        &NetworkFile {
            schema_version: SCHEMA_VERSION,
            config_digest: a.front.config_digest.clone(),
            networks: a.networks.clone(),
        },
    )?;
    if let Some(best) = a.record.best_solution {
        front::write_text(
            &dir.join(format!("confusion_{}.csv", dataset.name)),
            &a.record.solutions[best].confusion.to_csv(&dataset.classes),
        )?;
    }
    Ok(())
}

/// `report.json` plus per-run directories `run_<r>/`; the best run's files
/// are also copied to the top level.
pub fn write_pipeline_outputs(dir: &Path, report: &FrontReport, artifacts: &[Option<RunArtifacts>]) -> Result<()> {
    front::write_json(&dir.join("report.json"), report)?;
    for a in artifacts.iter().flatten() {
        write_run_outputs(&dir.join(format!("run_{}", a.record.run)), a, &report.dataset)?;
    }
    if let Some(a) = report.best_run.and_then(|b| artifacts[b].as_ref()) {
        write_run_outputs(dir, a, &report.dataset)?;
    }
    Ok(())
}

/// Run every configured run and write the outputs under `out`.
pub fn run_and_write(config: &RunConfig, out: &Path) -> Result<FrontReport> {
    let (report, artifacts) = run_pipeline(config)?;
    write_pipeline_outputs(out, &report, &artifacts)?;
    Ok(report)
}

/// Hand-set reservoir with the baseline size and connectivities.
pub fn unevolved_config(config: &RunConfig, ds: &Dataset, layers: usize, seed: u64) -> EsnConfig {
    let b = &config.baseline;
    EsnConfig {
        layer_sizes: vec![b.size; layers],
        input_connectivity: b.input_connectivity,
        layer_connectivities: vec![b.connectivity; layers],
        inter_connectivities: vec![b.inter_connectivity; layers.saturating_sub(1)],
        rng_seed: seed,
        ..template(config, ds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRun {
    pub run: usize,
    pub seed: u64,
    pub basic: Vec<PoolingScore>,
    pub ml: Vec<PoolingScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub schema_version: u32,
    pub config_digest: String,
    pub dataset: DatasetSummary,
    /// Classifier on the raw sequences.
    pub raw: f64,
    pub raw_confusion: ConfusionMatrix,
    pub runs: Vec<BaselineRun>,
    /// Single unevolved reservoir.
    pub basic: Vec<PoolingSummary>,
    /// `esn.layers` unevolved reservoirs.
    pub ml: Vec<PoolingSummary>,
}

fn summarize(runs: &[Vec<PoolingScore>], poolings: &[Pooling]) -> Vec<PoolingSummary> {
    poolings
        .iter()
        .filter_map(|&pooling| {
            let v: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.iter().find(|s| s.pooling == pooling).map(|s| s.ca))
                .collect();
            Summary::of(&v).map(|summary| PoolingSummary { pooling, summary })
        })
        .collect()
}

pub fn run_baselines_on(config: &RunConfig, ds: &Dataset) -> Result<BaselineReport> {
    let raw = classify_features(
        &FeatureSet::from_raw(&ds.train),
        &FeatureSet::from_raw(&ds.test),
        ds.num_classes,
        config,
    )?;
    let mut runs = Vec::with_capacity(config.num_runs);
    for r in 0..config.num_runs {
        let seed = run_seed(config.master_seed, r);
        let scores = |layers: usize| -> Result<Vec<PoolingScore>> {
            let cfg = unevolved_config(config, ds, layers, derive_seed(seed, &[STREAM_BASELINE, layers as u64]));
            let net = build_network(&cfg)?;
            Ok(score_network(&net, ds, config)?
                .into_iter()
                .map(|s| PoolingScore { pooling: s.pooling, ca: s.ca })
                .collect())
        };
        let basic = scores(1)?;
        let ml = scores(config.esn.layers)?;
        runs.push(BaselineRun { run: r, seed, basic, ml });
    }
    let poolings = config.poolings();
    Ok(BaselineReport {
        schema_version: SCHEMA_VERSION,
        config_digest: config.digest(),
        dataset: dataset_summary(ds),
        raw: raw.ca,
        raw_confusion: raw.confusion,
        basic: summarize(&runs.iter().map(|r| r.basic.clone()).collect::<Vec<_>>(), &poolings),
        ml: summarize(&runs.iter().map(|r| r.ml.clone()).collect::<Vec<_>>(), &poolings),
        runs,
    })
}

pub fn run_baselines(config: &RunConfig) -> Result<BaselineReport> {
    config.validate()?;
    let ds = prepare_dataset(config)?;
    run_baselines_on(config, &ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevelReport {
    /// `None` for the clean data.
    pub snr_db: Option<f64>,
    pub evolved: Vec<PoolingSummary>,
    pub baselines: BaselineReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweepReport {
    pub schema_version: u32,
    pub config_digest: String,
    pub levels: Vec<NoiseLevelReport>,
}

/// Evolved pipeline and baselines at every noise level.
pub fn noise_sweep(config: &RunConfig, levels: &[Option<f64>], out: Option<&Path>) -> Result<NoiseSweepReport> {
    let mut reports = Vec::with_capacity(levels.len());
    for &snr in levels {
        let cfg = RunConfig {
            noise_snr_db: snr,
            ..config.clone()
        };
        let (report, artifacts) = run_pipeline(&cfg)?;
        if let Some(dir) = out {
            let sub = match snr {
                Some(db) => format!("snr_{db}"),
                None => "clean".to_string(),
            };
            write_pipeline_outputs(&dir.join(sub), &report, &artifacts)?;
        }
        let ds = prepare_dataset(&cfg)?;
        reports.push(NoiseLevelReport {
            snr_db: snr,
            evolved: report.summary_by_pooling,
            baselines: run_baselines_on(&cfg, &ds)?,
        });
    }
    Ok(NoiseSweepReport {
        schema_version: SCHEMA_VERSION,
        config_digest: config.digest(),
        levels: reports,
    })
}
