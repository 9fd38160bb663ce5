//! Architecture genome: `[layer_conn(M), inter_conn(M-1), input_conn, size(M)]`,
//! its decoding into an [`EsnConfig`] and the bi-/tri-objective fitness.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esn::{build_network, EsnConfig};
use crate::rae::{self, Pattern};

use super::run::{Evaluated, Problem};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Reconstruction RMSE and mean reservoir connectivity.
    #[default]
    Bi,
    /// Adds the normalised mean reservoir size.
    Tri,
}

impl Mode {
    pub fn num_objectives(self) -> usize {
        match self {
            Mode::Bi => 2,
            Mode::Tri => 3,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Bi => "bi",
            Mode::Tri => "tri",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bi" => Ok(Mode::Bi),
            "tri" => Ok(Mode::Tri),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected bi or tri)"))),
        }
    }
}

/// Search box of the architecture genome. Connectivity intervals are open
/// at the lower end: a decoded rate never equals its lower bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchBounds {
    pub max_sizes: Vec<usize>,
    pub layer_conn: Vec<(f64, f64)>,
    pub inter_conn: Vec<(f64, f64)>,
    pub input_conn: (f64, f64),
}

impl ArchBounds {
    /// `layers` reservoirs of at most `max_size` neurons, every rate in (0, 1].
    pub fn uniform(layers: usize, max_size: usize) -> Self {
        ArchBounds {
            max_sizes: vec![max_size; layers],
            layer_conn: vec![(0.0, 1.0); layers],
            inter_conn: vec![(0.0, 1.0); layers.saturating_sub(1)],
            input_conn: (0.0, 1.0),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.max_sizes.len()
    }

    pub fn dim(&self) -> usize {
        3 * self.num_layers()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_layers();
        if m == 0 {
            return Err(Error::Config("architecture bounds need at least one layer".into()));
        }
        if self.layer_conn.len() != m || self.inter_conn.len() != m - 1 {
            return Err(Error::Config(format!(
                "{m} layers need {m} layer and {} inter connectivity bounds",
                m - 1
            )));
        }
        if self.max_sizes.contains(&0) {
            return Err(Error::Config("maximum reservoir size must be positive".into()));
        }
        let rates = self
            .layer_conn
            .iter()
            .chain(&self.inter_conn)
            .chain(std::iter::once(&self.input_conn));
        for &(lo, hi) in rates {
            if !(0.0..1.0).contains(&lo) || !(hi > lo && hi <= 1.0) {
                return Err(Error::Config(format!(
                    "connectivity bounds ({lo}, {hi}] must satisfy 0 <= lb < ub <= 1"
                )));
            }
        }
        Ok(())
    }

    pub fn lower(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.layer_conn.iter().map(|b| b.0).collect();
        v.extend(self.inter_conn.iter().map(|b| b.0));
        v.push(self.input_conn.0);
        v.extend(std::iter::repeat_n(1.0, self.num_layers()));
        v
    }

    pub fn upper(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.layer_conn.iter().map(|b| b.1).collect();
        v.extend(self.inter_conn.iter().map(|b| b.1));
        v.push(self.input_conn.1);
        v.extend(self.max_sizes.iter().map(|&s| s as f64));
        v
    }

    pub fn largest_size(&self) -> usize {
        self.max_sizes.iter().copied().max().unwrap_or(1)
    }
}

/// Named view over a genome slice of length `3M`.
#[derive(Debug, Clone, Copy)]
pub struct ArchGenome<'a> {
    values: &'a [f64],
    layers: usize,
}

impl<'a> ArchGenome<'a> {
    pub fn new(values: &'a [f64], layers: usize) -> Result<Self> {
        if layers == 0 || values.len() != 3 * layers {
            return Err(Error::Dimension(format!(
                "genome of length {} for {layers} layers (expected {})",
                values.len(),
                3 * layers
            )));
        }
        Ok(ArchGenome { values, layers })
    }

    pub fn layer_conn(&self) -> &'a [f64] {
        &self.values[..self.layers]
    }

    pub fn inter_conn(&self) -> &'a [f64] {
        &self.values[self.layers..2 * self.layers - 1]
    }

    pub fn input_conn(&self) -> f64 {
        self.values[2 * self.layers - 1]
    }

    pub fn size_raw(&self) -> &'a [f64] {
        &self.values[2 * self.layers..]
    }
}

fn decode_rate(x: f64, (lo, hi): (f64, f64)) -> f64 {
    let c = if x.is_nan() { hi } else { x.clamp(lo, hi) };
    if c <= lo {
        // smallest representable rate above an inclusive lower bound
        f64::from_bits(lo.to_bits() + 1)
    } else {
        c
    }
}

pub fn decode_size(raw: f64, max_size: usize) -> usize {
    if raw.is_nan() {
        return 1;
    }
    (raw.round().max(1.0) as usize).min(max_size)
}

/// Realise a genome as a network configuration. Everything not encoded in
/// the genome (spectral radius, ridge lambda, washout, seed, dimensions)
/// comes from `template`.
pub fn decode(genome: &[f64], bounds: &ArchBounds, template: &EsnConfig) -> Result<EsnConfig> {
    let g = ArchGenome::new(genome, bounds.num_layers())?;
    Ok(EsnConfig {
        layer_sizes: g
            .size_raw()
            .iter()
            .zip(&bounds.max_sizes)
            .map(|(&r, &m)| decode_size(r, m))
            .collect(),
        input_connectivity: decode_rate(g.input_conn(), bounds.input_conn),
        layer_connectivities: g
            .layer_conn()
            .iter()
            .zip(&bounds.layer_conn)
            .map(|(&x, &b)| decode_rate(x, b))
            .collect(),
        inter_connectivities: g
            .inter_conn()
            .iter()
            .zip(&bounds.inter_conn)
            .map(|(&x, &b)| decode_rate(x, b))
            .collect(),
        ..template.clone()
    })
}

/// Mean intra-reservoir connectivity.
pub fn arcr(config: &EsnConfig) -> f64 {
    let c = &config.layer_connectivities;
    c.iter().sum::<f64>() / c.len() as f64
}

/// Mean reservoir size divided by the largest allowed size.
pub fn ars_normalized(config: &EsnConfig, bounds: &ArchBounds) -> f64 {
    let s = &config.layer_sizes;
    let mean = s.iter().sum::<usize>() as f64 / s.len() as f64;
    mean / bounds.largest_size() as f64
}

/// Objectives of a decoded configuration whose reservoir reconstructs
/// `train` with error `rmse`.
pub fn objectives(rmse: f64, config: &EsnConfig, bounds: &ArchBounds, mode: Mode) -> Vec<f64> {
    let mut f = vec![rmse, arcr(config)];
    if mode == Mode::Tri {
        f.push(ars_normalized(config, bounds));
    }
    f
}

/// Build the decoded network with reservoir seed `seed`, fit the
/// autoencoder on `train` and score it. A failure yields `f64::MAX` in
/// every objective with the reason attached.
pub fn evaluate_genome(
    genome: &[f64],
    train: &[Pattern],
    mode: Mode,
    seed: u64,
    bounds: &ArchBounds,
    template: &EsnConfig,
) -> Evaluated<EsnConfig> {
    let config = match decode(genome, bounds, template) {
        Ok(c) => EsnConfig {
            rng_seed: seed,
            ..c
        },
        Err(e) => return Evaluated::failed(mode.num_objectives(), template.clone(), e.to_string()),
    };
    let scored = build_network(&config).and_then(|net| rae::fit_and_score(&net, train, config.ridge_lambda));
    match scored {
        Ok(fit) if fit.rmse.is_finite() => Evaluated {
            objectives: objectives(fit.rmse, &config, bounds, mode),
            meta: config,
            failure: None,
        },
        Ok(fit) => Evaluated::failed(mode.num_objectives(), config, format!("non-finite RMSE {}", fit.rmse)),
        Err(e) => Evaluated::failed(mode.num_objectives(), config, e.to_string()),
    }
}

/// The architecture search as a [`Problem`]: every genome is evaluated with
/// the same reservoir seed.
pub struct ArchitectureProblem<'a> {
    train: &'a [Pattern],
    bounds: ArchBounds,
    template: EsnConfig,
    mode: Mode,
    eval_seed: u64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<'a> ArchitectureProblem<'a> {
    pub fn new(
        train: &'a [Pattern],
        bounds: ArchBounds,
        template: EsnConfig,
        mode: Mode,
        eval_seed: u64,
    ) -> Result<Self> {
        bounds.validate()?;
        if train.is_empty() {
            return Err(Error::Empty("empty training split"));
        }
        let steps = train[0].sequence.rows();
        if template.washout >= steps {
            return Err(Error::Config(format!(
                "washout of {} steps leaves no readout rows in {steps}-step patterns",
                template.washout
            )));
        }
        let rows = train.len() * (steps - template.washout);
        if template.ridge_lambda == 0.0 && rows < bounds.largest_size() {
            return Err(Error::Config(format!(
                "{rows} state rows cannot determine an unregularised readout over up to {} neurons",
                bounds.largest_size()
            )));
        }
        if template.input_dim != train[0].sequence.cols() || template.output_dim != template.input_dim {
            return Err(Error::Config(format!(
                "autoencoder dimensions {}->{} do not match {}-channel data",
                template.input_dim,
                template.output_dim,
                train[0].sequence.cols()
            )));
        }
        Ok(ArchitectureProblem {
            lower: bounds.lower(),
            upper: bounds.upper(),
            train,
            bounds,
            template,
            mode,
            eval_seed,
        })
    }

    pub fn bounds(&self) -> &ArchBounds {
        &self.bounds
    }

    pub fn eval_seed(&self) -> u64 {
        self.eval_seed
    }
}

impl Problem for ArchitectureProblem<'_> {
    type Meta = EsnConfig;

    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn num_objectives(&self) -> usize {
        self.mode.num_objectives()
    }

    fn evaluate(&self, position: &[f64]) -> Evaluated<EsnConfig> {
        evaluate_genome(position, self.train, self.mode, self.eval_seed, &self.bounds, &self.template)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;

    fn template() -> EsnConfig {
        EsnConfig::basic(1, 1.0, 0)
    }

    #[test]
    fn size_decoding() {
        assert_eq!(decode_size(0.4, 500), 1);
        assert_eq!(decode_size(123.6, 500), 124);
        assert_eq!(decode_size(900.0, 500), 500);
    }

    #[test]
    fn genome_layout() {
        let bounds = ArchBounds::uniform(2, 500);
        assert_eq!(bounds.dim(), 6);
        assert_eq!(bounds.lower(), vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(bounds.upper(), vec![1.0, 1.0, 1.0, 1.0, 500.0, 500.0]);
        let cfg = decode(&[0.2, 0.4, 0.7, 0.9, 100.2, 299.5], &bounds, &template()).unwrap();
        assert_eq!(cfg.layer_connectivities, vec![0.2, 0.4]);
        assert_eq!(cfg.inter_connectivities, vec![0.7]);
        assert_eq!(cfg.input_connectivity, 0.9);
        assert_eq!(cfg.layer_sizes, vec![100, 300]);
        cfg.validate().unwrap();
        assert!(decode(&[0.1; 5], &bounds, &template()).is_err());
    }

    #[test]
    fn zero_rate_decodes_inside_open_interval() {
        let bounds = ArchBounds::uniform(1, 10);
        let cfg = decode(&[0.0, 0.0, 5.0], &bounds, &template()).unwrap();
        assert!(cfg.layer_connectivities[0] > 0.0);
        assert!(cfg.input_connectivity > 0.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn objective_arithmetic() {
        let bounds = ArchBounds::uniform(2, 500);
        let cfg = decode(&[0.2, 0.4, 0.5, 0.5, 100.0, 300.0], &bounds, &template()).unwrap();
        assert!((arcr(&cfg) - 0.3).abs() < 1e-15);
        assert!((ars_normalized(&cfg, &bounds) - 0.4).abs() < 1e-15);
        assert_eq!(objectives(0.1, &cfg, &bounds, Mode::Bi).len(), 2);
        assert_eq!(objectives(0.1, &cfg, &bounds, Mode::Tri).len(), 3);
    }

    #[test]
    fn zero_signal_has_zero_rmse() {
        let train: Vec<Pattern> = (0..3)
            .map(|i| Pattern {
                sequence: Mat::zeros(8, 1),
                label: i % 2,
            })
            .collect();
        let bounds = ArchBounds::uniform(2, 20);
        let e = evaluate_genome(&[0.3, 0.3, 0.5, 1.0, 10.0, 12.0], &train, Mode::Bi, 4, &bounds, &template());
        assert!(e.failure.is_none());
        assert_eq!(e.objectives[0], 0.0);
        assert_eq!(e.meta.rng_seed, 4);
    }

    #[test]
    fn failure_becomes_sentinel() {
        let train = vec![Pattern {
            sequence: Mat::zeros(4, 2),
            label: 0,
        }];
        let bounds = ArchBounds::uniform(1, 5);
        let e = evaluate_genome(&[0.5, 0.5, 3.0], &train, Mode::Tri, 1, &bounds, &template());
        assert!(e.failure.is_some());
        assert_eq!(e.objectives, vec![f64::MAX; 3]);
    }

    #[test]
    fn bound_validation() {
        let mut b = ArchBounds::uniform(2, 10);
        b.validate().unwrap();
        b.inter_conn.clear();
        assert!(b.validate().is_err());
        let mut b = ArchBounds::uniform(1, 10);
        b.input_conn = (0.5, 0.5);
        assert!(b.validate().is_err());
    }
}
