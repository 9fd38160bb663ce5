//! The MOPSO loop: evaluate the swarm, merge it into the leader archive,
//! steer every particle toward a crowding-weighted leader, mutate, repeat.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esn::EsnConfig;
use crate::rae::Pattern;
use crate::rng::{derive_seed, rng_for};

use super::genome::{ArchBounds, ArchitectureProblem, Mode};
use super::pareto::{ArchiveEntry, ParetoArchive};
use super::swarm::{self, Coefficients, Particle, SwarmState};
use rand::Rng;

const STREAM_INIT: u64 = 0;
const STREAM_MOVE: u64 = 1;
const STREAM_EVAL: u64 = 2;

/// Objective values of one position plus whatever the problem wants to keep
/// alongside an archived solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated<M> {
    pub objectives: Vec<f64>,
    pub meta: M,
    pub failure: Option<String>,
}

impl<M> Evaluated<M> {
    pub fn failed(num_objectives: usize, meta: M, reason: String) -> Self {
        Evaluated {
            objectives: vec![f64::MAX; num_objectives],
            meta,
            failure: Some(reason),
        }
    }
}

/// A box-constrained multi-objective minimisation problem.
pub trait Problem: Sync {
    type Meta: Clone + Send;

    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    fn num_objectives(&self) -> usize;
    /// Must be a pure function of `position`.
    fn evaluate(&self, position: &[f64]) -> Evaluated<Self::Meta>;
}

fn default_population() -> usize {
    20
}
fn default_iterations() -> usize {
    50
}
fn default_inertia() -> f64 {
    0.5
}
fn default_c1() -> f64 {
    0.1
}
fn default_c2() -> f64 {
    0.2
}
fn default_leaders() -> usize {
    10
}
fn default_mutation() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MopsoParams {
    #[serde(default = "default_population")]
    pub population: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_inertia")]
    pub inertia: f64,
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default = "default_c2")]
    pub c2: f64,
    /// Archive capacity.
    #[serde(default = "default_leaders")]
    pub leaders: usize,
    #[serde(default = "default_mutation")]
    pub mutation_rate: f64,
}

impl Default for MopsoParams {
    fn default() -> Self {
        MopsoParams {
            population: default_population(),
            iterations: default_iterations(),
            inertia: default_inertia(),
            c1: default_c1(),
            c2: default_c2(),
            leaders: default_leaders(),
            mutation_rate: default_mutation(),
        }
    }
}

impl MopsoParams {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(Error::Config("swarm population must be positive".into()));
        }
        if self.leaders == 0 {
            return Err(Error::Config("leader archive capacity must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::Config(format!("mutation rate {} outside [0, 1]", self.mutation_rate)));
        }
        for (name, v) in [("inertia", self.inertia), ("c1", self.c1), ("c2", self.c2)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    fn coefficients(&self) -> Coefficients {
        Coefficients {
            inertia: self.inertia,
            c1: self.c1,
            c2: self.c2,
        }
    }
}

/// Archive objectives after an iteration; iteration 0 is the initial swarm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub front: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MopsoOutcome<M> {
    pub archive: ParetoArchive<M>,
    pub trace: Vec<TraceRecord>,
    pub swarm: SwarmState,
    /// `(iteration, particle, reason)` of every failed evaluation.
    pub failures: Vec<(usize, usize, String)>,
}

pub fn run_mopso<P: Problem>(problem: &P, params: &MopsoParams, seed: u64) -> Result<MopsoOutcome<P::Meta>> {
    run_mopso_observed(problem, params, seed, |_, _| {})
}

/// [`run_mopso`] calling `observe(archive, swarm)` after the initial merge
/// and after every iteration.
pub fn run_mopso_observed<P, F>(
    problem: &P,
    params: &MopsoParams,
    seed: u64,
    mut observe: F,
) -> Result<MopsoOutcome<P::Meta>>
where
    P: Problem,
    F: FnMut(&ParetoArchive<P::Meta>, &SwarmState),
{
    params.validate()?;
    let lower = problem.lower().to_vec();
    let upper = problem.upper().to_vec();
    if lower.len() != upper.len() || lower.is_empty() {
        return Err(Error::Config("problem bounds must be non-empty and of equal length".into()));
    }
    if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::Config("problem lower bound exceeds upper bound".into()));
    }
    let vmax: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| u - l).collect();
    let coeffs = params.coefficients();

    let positions: Vec<Vec<f64>> = (0..params.population)
        .map(|i| {
            let mut rng = rng_for(seed, &[STREAM_INIT, i as u64]);
            lower
                .iter()
                .zip(&upper)
                .map(|(&l, &u)| if u > l { rng.random_range(l..=u) } else { l })
                .collect()
        })
        .collect();
    let mut failures = Vec::new();
    let evals = evaluate_all(problem, &positions);
    let mut archive = ParetoArchive::new(params.leaders)?;
    let mut particles = Vec::with_capacity(params.population);
    let mut candidates = Vec::new();
    for (i, (pos, ev)) in positions.into_iter().zip(evals).enumerate() {
        collect(&mut candidates, &mut failures, 0, i, &pos, ev.clone());
        particles.push(Particle::new(pos, ev.objectives));
    }
    merge(&mut archive, candidates);
    let mut swarm = SwarmState { particles, iteration: 0 };
    let mut trace = vec![TraceRecord {
        iteration: 0,
        front: archive.objectives(),
    }];
    observe(&archive, &swarm);

    for it in 0..params.iterations {
        let mut rngs: Vec<_> = (0..params.population)
            .map(|i| rng_for(seed, &[STREAM_MOVE, it as u64, i as u64]))
            .collect();
        for (p, rng) in swarm.particles.iter_mut().zip(&mut rngs) {
            let leader = match archive.select_leader(rng) {
                Ok(e) => e.position.clone(),
                Err(_) => p.best_position.clone(),
            };
            swarm::update_velocity_position(p, &leader, &coeffs, &lower, &upper, &vmax, rng);
            swarm::mutate(&mut p.position, it, params.iterations, params.mutation_rate, &lower, &upper, rng);
        }
        let positions: Vec<Vec<f64>> = swarm.particles.iter().map(|p| p.position.clone()).collect();
        let evals = evaluate_all(problem, &positions);
        let mut candidates = Vec::new();
        for (i, ((p, ev), rng)) in swarm.particles.iter_mut().zip(evals).zip(&mut rngs).enumerate() {
            p.objectives.clone_from(&ev.objectives);
            swarm::update_local_best(p, rng);
            collect(&mut candidates, &mut failures, it + 1, i, &p.position, ev);
        }
        merge(&mut archive, candidates);
        swarm.iteration = it + 1;
        trace.push(TraceRecord {
            iteration: it + 1,
            front: archive.objectives(),
        });
        log::debug!("mopso iteration {}: {} leaders", it + 1, archive.len());
        observe(&archive, &swarm);
    }
    Ok(MopsoOutcome {
        archive,
        trace,
        swarm,
        failures,
    })
}

/// Particle-by-particle insertion, truncating after each one, so every
/// newcomer competes for space against the current archive alone.
fn merge<M: Clone>(archive: &mut ParetoArchive<M>, candidates: Vec<ArchiveEntry<M>>) {
    for c in candidates {
        archive.update(std::iter::once(c));
    }
}

fn evaluate_all<P: Problem>(problem: &P, positions: &[Vec<f64>]) -> Vec<Evaluated<P::Meta>> {
    positions.par_iter().map(|p| problem.evaluate(p)).collect()
}

fn collect<M>(
    candidates: &mut Vec<ArchiveEntry<M>>,
    failures: &mut Vec<(usize, usize, String)>,
    iteration: usize,
    particle: usize,
    position: &[f64],
    ev: Evaluated<M>,
) {
    match ev.failure {
        Some(reason) => {
            log::warn!("evaluation failed (iteration {iteration}, particle {particle}): {reason}");
            failures.push((iteration, particle, reason));
        }
        None => candidates.push(ArchiveEntry {
            position: position.to_vec(),
            objectives: ev.objectives,
            meta: ev.meta,
        }),
    }
}

/// Reservoir seed shared by every genome evaluated in the run seeded with
/// `run_seed`.
pub fn evaluation_seed(run_seed: u64) -> u64 {
    derive_seed(run_seed, &[STREAM_EVAL])
}

/// Level-1 search over reservoir architectures for `train`. All genomes of
/// one run share a reservoir seed derived from `seed`.
pub fn run_architecture_search(
    train: &[Pattern],
    bounds: &ArchBounds,
    template: &EsnConfig,
    mode: Mode,
    params: &MopsoParams,
    seed: u64,
) -> Result<MopsoOutcome<EsnConfig>> {
    let problem = ArchitectureProblem::new(
        train,
        bounds.clone(),
        template.clone(),
        mode,
        evaluation_seed(seed),
    )?;
    run_mopso(&problem, params, seed)
}
