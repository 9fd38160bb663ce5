//! Level 1: multi-objective particle swarm search over reservoir
//! architectures with a bounded archive of non-dominated leaders.

pub mod genome;
pub mod pareto;
pub mod run;
pub mod swarm;

pub use genome::{decode, evaluate_genome, ArchBounds, ArchGenome, ArchitectureProblem, Mode};
pub use pareto::{crowding_distance, dominates, hypervolume, pareto_filter, ArchiveEntry, ParetoArchive};
pub use run::{
    evaluation_seed, run_architecture_search, run_mopso, run_mopso_observed, Evaluated, MopsoOutcome, MopsoParams, Problem,
    TraceRecord,
};
pub use swarm::{mutate, update_velocity_position, Particle, SwarmState};
