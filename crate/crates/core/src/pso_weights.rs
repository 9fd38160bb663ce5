//! Level 2: single-objective refinement of the untrained weights of one
//! fixed architecture, minimising training reconstruction RMSE.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esn::EsnNetwork;
use crate::rae::{self, Pattern};
use crate::rng::rng_for;

const STREAM_INIT: u64 = 0;
const STREAM_MOVE: u64 = 1;

/// Above this many weights a full-mode search is unlikely to move far from
/// its starting point.
pub const LARGE_GENOME: usize = 20_000;

/// Masked weight values in canonical order: `W_in`, then every recurrent
/// matrix, then every inter-reservoir matrix, each in row-major mask order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightGenome(pub Vec<f64>);

impl WeightGenome {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn flatten(net: &EsnNetwork) -> WeightGenome {
    WeightGenome(net.matrices().flat_map(|m| m.raw().iter().copied()).collect())
}

/// Write `genome` into the masks of `template`, rescale every recurrent
/// matrix to the configured spectral radius and drop the readout.
pub fn unflatten(genome: &WeightGenome, template: &EsnNetwork) -> Result<EsnNetwork> {
    let expected: usize = template.matrices().map(|m| m.nnz()).sum();
    if genome.len() != expected {
        return Err(Error::Dimension(format!(
            "weight genome of length {} for {expected} masked weights",
            genome.len()
        )));
    }
    let mut net = template.clone();
    let mut offset = 0;
    for m in net.matrices_mut() {
        let n = m.nnz();
        m.set_raw(&genome.0[offset..offset + n]);
        m.set_gain(1.0);
        offset += n;
    }
    net.rescale()?;
    net.clear_readout();
    Ok(net)
}

/// Effective multiplier of every matrix, canonical order.
pub fn gains(net: &EsnNetwork) -> Vec<f64> {
    net.matrices().map(|m| m.gain()).collect()
}

/// Copy of `net` with raw weights `genome` and gains `gains` taken as they
/// are (no rescaling), readout dropped. Restores a stored network exactly.
pub fn with_weights(template: &EsnNetwork, genome: &WeightGenome, gains: &[f64]) -> Result<EsnNetwork> {
    let count = template.matrices().count();
    if gains.len() != count {
        return Err(Error::Dimension(format!("{} gains for {count} matrices", gains.len())));
    }
    let mut net = unflatten(genome, template)?;
    for (m, &g) in net.matrices_mut().zip(gains) {
        m.set_gain(g);
    }
    Ok(net)
}

/// Multiply every matrix gain of `template` by the matching factor; the
/// recurrent factors thus scale the spectral radius away from its target.
pub fn apply_scaling(factors: &[f64], template: &EsnNetwork) -> Result<EsnNetwork> {
    let count = template.matrices().count();
    if factors.len() != count {
        return Err(Error::Dimension(format!("{} scaling factors for {count} matrices", factors.len())));
    }
    let mut net = template.clone();
    for (m, &f) in net.matrices_mut().zip(factors) {
        let g = m.gain() * f;
        m.set_gain(g);
    }
    net.clear_readout();
    Ok(net)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// Every masked weight is a decision variable in [-1, 1].
    #[default]
    Full,
    /// One gain factor in [0, 2] per matrix.
    ScalingOnly,
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightMode::Full => "full",
            WeightMode::ScalingOnly => "scaling-only",
        })
    }
}

impl FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(WeightMode::Full),
            "scaling-only" => Ok(WeightMode::ScalingOnly),
            other => Err(Error::Config(format!("unknown weight mode `{other}`"))),
        }
    }
}

fn default_population() -> usize {
    10
}
fn default_iterations() -> usize {
    50
}
fn default_inertia() -> f64 {
    0.9
}
fn default_c1() -> f64 {
    0.1
}
fn default_c2() -> f64 {
    0.2
}
fn default_init_noise() -> f64 {
    0.1
}
fn default_velocity_clamp() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightPsoParams {
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
    /// Half-width of the uniform perturbation around the incumbent.
    #[serde(default = "default_init_noise")]
    pub init_noise: f64,
    #[serde(default = "default_velocity_clamp")]
    pub velocity_clamp: f64,
    #[serde(default)]
    pub mode: WeightMode,
}

impl Default for WeightPsoParams {
    fn default() -> Self {
        WeightPsoParams {
            population: default_population(),
            iterations: default_iterations(),
            inertia: default_inertia(),
            c1: default_c1(),
            c2: default_c2(),
            init_noise: default_init_noise(),
            velocity_clamp: default_velocity_clamp(),
            mode: WeightMode::Full,
        }
    }
}

impl WeightPsoParams {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(Error::Config("weight swarm population must be positive".into()));
        }
        if !(self.init_noise >= 0.0) || !(self.velocity_clamp > 0.0) {
            return Err(Error::Config(
                "initial noise must be non-negative and the velocity clamp positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub position: Vec<f64>,
    pub value: f64,
    /// Best value before the first move and after every iteration.
    pub trace: Vec<f64>,
}

/// Strategy for the level-2 search. Implementations must keep `start` in
/// the population so the result is never worse than `objective(start)`.
pub trait WeightOptimizer {
    fn name(&self) -> &'static str;

    fn minimize(
        &self,
        objective: &(dyn Fn(&[f64]) -> f64 + Sync),
        start: &[f64],
        lower: &[f64],
        upper: &[f64],
        seed: u64,
    ) -> Result<Minimum>;
}

/// Global-best PSO seeded with the start point plus uniformly perturbed
/// copies of it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSwarm {
    pub params: WeightPsoParams,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

impl WeightOptimizer for ParticleSwarm {
    fn name(&self) -> &'static str {
        "pso"
    }

    fn minimize(
        &self,
        objective: &(dyn Fn(&[f64]) -> f64 + Sync),
        start: &[f64],
        lower: &[f64],
        upper: &[f64],
        seed: u64,
    ) -> Result<Minimum> {
        let p = &self.params;
        p.validate()?;
        let dim = start.len();
        if lower.len() != dim || upper.len() != dim {
            return Err(Error::Dimension("bounds do not match the start point".into()));
        }
        if p.iterations == 0 {
            let value = sanitize(objective(start));
            return Ok(Minimum {
                position: start.to_vec(),
                value,
                trace: vec![value],
            });
        }
        let mut positions: Vec<Vec<f64>> = Vec::with_capacity(p.population);
        positions.push(start.to_vec());
        for i in 1..p.population {
            let mut rng = rng_for(seed, &[STREAM_INIT, i as u64]);
            positions.push(
                (0..dim)
                    .map(|d| {
                        let noise = if p.init_noise > 0.0 {
                            rng.random_range(-p.init_noise..=p.init_noise)
                        } else {
                            0.0
                        };
                        (start[d] + noise).clamp(lower[d], upper[d])
                    })
                    .collect(),
            );
        }
        let mut velocities = vec![vec![0.0; dim]; p.population];
        let values: Vec<f64> = positions.par_iter().map(|x| sanitize(objective(x))).collect();
        let mut best_pos = positions.clone();
        let mut best_val = values.clone();
        let mut g = 0;
        for i in 1..p.population {
            if best_val[i] < best_val[g] {
                g = i;
            }
        }
        let mut trace = vec![best_val[g]];

        for it in 0..p.iterations {
            let leader = best_pos[g].clone();
            for (i, (x, v)) in positions.iter_mut().zip(&mut velocities).enumerate() {
                let mut rng = rng_for(seed, &[STREAM_MOVE, it as u64, i as u64]);
                for d in 0..dim {
                    let r1: f64 = rng.random();
                    let r2: f64 = rng.random();
                    let vd = p.inertia * v[d]
                        + p.c1 * r1 * (best_pos[i][d] - x[d])
                        + p.c2 * r2 * (leader[d] - x[d]);
                    v[d] = vd.clamp(-p.velocity_clamp, p.velocity_clamp);
                    x[d] = (x[d] + v[d]).clamp(lower[d], upper[d]);
                }
            }
            let values: Vec<f64> = positions.par_iter().map(|x| sanitize(objective(x))).collect();
            for i in 0..p.population {
                if values[i] < best_val[i] {
                    best_val[i] = values[i];
                    best_pos[i].clone_from(&positions[i]);
                }
                if best_val[i] < best_val[g] {
                    g = i;
                }
            }
            trace.push(best_val[g]);
            log::debug!("weight pso iteration {}: best {:e}", it + 1, best_val[g]);
        }
        Ok(Minimum {
            position: best_pos[g].clone(),
            value: best_val[g],
            trace,
        })
    }
}

#[derive(Debug, Clone)]
pub struct WeightPsoOutcome {
    /// Best-ever network with its readout trained.
    pub network: EsnNetwork,
    pub rmse: f64,
    pub initial_rmse: f64,
    pub trace: Vec<f64>,
}

/// Training RMSE of `net` after (re)fitting its readout; failures score
/// `+inf`.
fn fitness(net: Result<EsnNetwork>, train: &[Pattern]) -> f64 {
    net.and_then(|n| {
        let lambda = n.config().ridge_lambda;
        rae::fit_and_score(&n, train, lambda)
    })
    .map_or(f64::INFINITY, |f| f.rmse)
}

/// Refine the weights of `incumbent` with the default particle swarm.
pub fn run_weight_pso(
    incumbent: &EsnNetwork,
    train: &[Pattern],
    params: &WeightPsoParams,
    seed: u64,
) -> Result<WeightPsoOutcome> {
    let optimizer = ParticleSwarm { params: params.clone() };
    refine_weights(&optimizer, params.mode, incumbent, train, seed)
}

/// Refine the weights of `incumbent` with any optimizer. The incumbent is
/// part of the search, so the returned RMSE never exceeds its own.
pub fn refine_weights(
    optimizer: &dyn WeightOptimizer,
    mode: WeightMode,
    incumbent: &EsnNetwork,
    train: &[Pattern],
    seed: u64,
) -> Result<WeightPsoOutcome> {
    if train.is_empty() {
        return Err(Error::Empty("empty training split"));
    }
    let (start, lower, upper) = match mode {
        WeightMode::Full => {
            let g = flatten(incumbent);
            if g.len() > LARGE_GENOME {
                log::warn!(
                    "weight genome has {} dimensions; consider the scaling-only mode",
                    g.len()
                );
            }
            let n = g.len();
            (g.0, vec![-1.0; n], vec![1.0; n])
        }
        WeightMode::ScalingOnly => {
            let n = incumbent.matrices().count();
            (vec![1.0; n], vec![0.0; n], vec![2.0; n])
        }
    };
    let realise = |x: &[f64]| match mode {
        WeightMode::Full => unflatten(&WeightGenome(x.to_vec()), incumbent),
        WeightMode::ScalingOnly => apply_scaling(x, incumbent),
    };
    let objective = |x: &[f64]| fitness(realise(x), train);
    let best = optimizer.minimize(&objective, &start, &lower, &upper, seed)?;
    let net = realise(&best.position)?;
    let fitted = rae::fit_and_score(&net, train, net.config().ridge_lambda)?;
    Ok(WeightPsoOutcome {
        network: fitted.net,
        rmse: fitted.rmse,
        initial_rmse: best.trace[0],
        trace: best.trace,
    })
}
