//! Echo state network autoencoders whose architecture is evolved by a
//! Pareto-archive multi-objective PSO and whose untrained weights are refined
//! by a single-objective PSO; the evolved reservoir states then serve as
//! features for time-series classification.

pub mod classify;
pub mod error;
pub mod esn;
pub mod linalg;
pub mod mopso;
pub mod pipeline;
pub mod pso_weights;
pub mod rae;
pub mod rng;

pub use error::{Error, Result};
