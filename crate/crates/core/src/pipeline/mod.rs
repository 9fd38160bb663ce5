//! End-to-end orchestration: data ingestion, noise, both optimisation
//! levels, classification, statistics over runs and persistence.

pub mod config;
pub mod data;
pub mod front;
pub mod report;
pub mod run;
pub mod stages;

pub use config::{BaselineSettings, DataFormat, DatasetSpec, EsnSettings, RunConfig};
pub use data::{add_noise, load_dataset};
pub use front::{FrontEntry, FrontFile, NetworkFile, StoredNetwork};
pub use report::{FrontReport, RunRecord, SolutionRecord, Summary};
pub use run::{
    noise_sweep, prepare_dataset, run_and_write, run_baselines, run_once, run_pipeline, BaselineReport,
    NoiseSweepReport,
};
