//! An echo state network used as a recurrent autoencoder: the readout is
//! trained to reproduce the current input, and the states of the last
//! reservoir become the new representation of each pattern.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esn::{self, BatchStates, EsnNetwork};
use crate::linalg::Mat;

/// Patterns driven through the reservoir in one batch during extraction.
const EXTRACT_CHUNK: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    /// Rows are time steps, columns are channels.
    pub sequence: Mat,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub train: Vec<Pattern>,
    pub test: Vec<Pattern>,
    pub num_classes: usize,
    /// Original label text of each class id.
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        train: Vec<Pattern>,
        test: Vec<Pattern>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let ds = Dataset {
            name: name.into(),
            train,
            test,
            num_classes: class_names.len(),
            class_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::Data(format!("{}: empty training split", self.name)));
        }
        if self.num_classes == 0 {
            return Err(Error::Data(format!("{}: no classes", self.name)));
        }
        let (t, d) = self.shape();
        for p in self.train.iter().chain(&self.test) {
            if p.sequence.rows() != t || p.sequence.cols() != d {
                return Err(Error::Data(format!(
                    "{}: pattern of shape {}x{} in a {t}x{d} dataset",
                    self.name,
                    p.sequence.rows(),
                    p.sequence.cols()
                )));
            }
            if p.label >= self.num_classes {
                return Err(Error::Data(format!(
                    "{}: label {} outside [0, {})",
                    self.name, p.label, self.num_classes
                )));
            }
        }
        Ok(())
    }

    /// `(steps, channels)` shared by all patterns.
    pub fn shape(&self) -> (usize, usize) {
        self.train
            .first()
            .map_or((0, 0), |p| (p.sequence.rows(), p.sequence.cols()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// State after the final step.
    #[default]
    Last,
    /// Average state over all steps.
    Mean,
    /// All states flattened time-major.
    Concat,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Last => "last",
            Pooling::Mean => "mean",
            Pooling::Concat => "concat",
        })
    }
}

impl FromStr for Pooling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(Pooling::Last),
            "mean" => Ok(Pooling::Mean),
            "concat" => Ok(Pooling::Concat),
            other => Err(Error::Config(format!("unknown pooling '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub pooling: Pooling,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Raw sequences flattened into feature vectors (no reservoir).
    pub fn from_raw(split: &[Pattern]) -> Self {
        FeatureSet {
            features: split.iter().map(|p| p.sequence.as_slice().to_vec()).collect(),
            labels: split.iter().map(|p| p.label).collect(),
            pooling: Pooling::Concat,
        }
    }
}

fn check_split(net: &EsnNetwork, split: &[Pattern]) -> Result<()> {
    if split.is_empty() {
        return Err(Error::Empty("empty dataset split"));
    }
    let d = net.config().input_dim;
    if net.config().output_dim != d {
        return Err(Error::Dimension(format!(
            "autoencoder output dimension {} differs from input dimension {d}",
            net.config().output_dim
        )));
    }
    Ok(())
}

/// Inputs of a split laid out like the state blocks: `d x (T * P)` with
/// sample `t * P + p`.
fn target_block(split: &[Pattern]) -> Mat {
    let steps = split[0].sequence.rows();
    let d = split[0].sequence.cols();
    let batch = split.len();
    let mut y = Mat::zeros(d, steps * batch);
    for (p, pat) in split.iter().enumerate() {
        for t in 0..steps {
            for j in 0..d {
                y[(j, t * batch + p)] = pat.sequence[(t, j)];
            }
        }
    }
    y
}

/// Everything the training pass produces, so the fitness can reuse the
/// states instead of re-running the reservoir.
pub(crate) struct FittedRae {
    pub net: EsnNetwork,
    pub rmse: f64,
}

pub(crate) fn fit_and_score(net: &EsnNetwork, train: &[Pattern], lambda: f64) -> Result<FittedRae> {
    check_split(net, train)?;
    let inputs: Vec<&Mat> = train.iter().map(|p| &p.sequence).collect();
    let states = net.run_batch_last(&inputs)?;
    let targets = target_block(train);
    let start = washout_start(net, &states)?;
    let w_out = esn::ridge_readout_columns(&states.states, &targets, start, lambda)?;
    let net = net.clone().with_readout(w_out)?;
    let rmse = score_block(&net, &states, &targets, start)?;
    Ok(FittedRae { net, rmse })
}

fn washout_start(net: &EsnNetwork, states: &BatchStates) -> Result<usize> {
    let washout = net.config().washout;
    if washout >= states.steps {
        return Err(Error::Config(format!(
            "washout of {washout} steps leaves nothing of {}-step patterns",
            states.steps
        )));
    }
    Ok(washout * states.batch)
}

fn score_block(net: &EsnNetwork, states: &BatchStates, targets: &Mat, start: usize) -> Result<f64> {
    let outputs = net.readout_block(states)?;
    let s = targets.cols();
    let d = targets.rows();
    let mut t = Vec::with_capacity(d * (s - start));
    let mut o = Vec::with_capacity(d * (s - start));
    for j in 0..d {
        t.extend_from_slice(&targets.row(j)[start..]);
        o.extend_from_slice(&outputs.row(j)[start..]);
    }
    esn::rmse(&t, &o)
}

/// Train the readout to reconstruct the current input `u(n)` at every step
/// of every training pattern.
pub fn fit_rae(net: &EsnNetwork, train: &[Pattern], lambda: f64) -> Result<EsnNetwork> {
    fit_and_score(net, train, lambda).map(|f| f.net)
}

/// Reconstruction RMSE over every (post-washout) step of every pattern.
pub fn reconstruction_rmse(rae: &EsnNetwork, split: &[Pattern]) -> Result<f64> {
    check_split(rae, split)?;
    if !rae.is_trained() {
        return Err(Error::UntrainedReadout);
    }
    let inputs: Vec<&Mat> = split.iter().map(|p| &p.sequence).collect();
    let states = rae.run_batch_last(&inputs)?;
    let targets = target_block(split);
    let start = washout_start(rae, &states)?;
    score_block(rae, &states, &targets, start)
}

/// Reduce one pattern's state sequence (one vector per step) to a feature
/// vector.
pub fn pool_states(states: &[Vec<f64>], pooling: Pooling) -> Vec<f64> {
    let n = states.first().map_or(0, Vec::len);
    match pooling {
        Pooling::Last => states.last().cloned().unwrap_or_default(),
        Pooling::Mean => {
            let mut acc = vec![0.0; n];
            for x in states {
                for (a, v) in acc.iter_mut().zip(x) {
                    *a += v;
                }
            }
            let steps = states.len().max(1) as f64;
            acc.iter_mut().for_each(|a| *a /= steps);
            acc
        }
        Pooling::Concat => states.concat(),
    }
}

/// Pool the last reservoir's states of each pattern into one feature vector.
/// Does not read the readout.
pub fn extract_features(rae: &EsnNetwork, split: &[Pattern], pooling: Pooling) -> Result<FeatureSet> {
    if split.is_empty() {
        return Err(Error::Empty("empty dataset split"));
    }
    let n = rae.config().last_layer_size();
    let mut features = Vec::with_capacity(split.len());
    for chunk in split.chunks(EXTRACT_CHUNK) {
        let inputs: Vec<&Mat> = chunk.iter().map(|p| &p.sequence).collect();
        let block = rae.run_batch_last(&inputs)?;
        let z = &block.states;
        let steps = block.steps;
        for p in 0..chunk.len() {
            let states: Vec<Vec<f64>> = (0..steps)
                .map(|t| (0..n).map(|i| z[(i, block.sample(t, p))]).collect())
                .collect();
            let v = pool_states(&states, pooling);
            features.push(v);
        }
    }
    Ok(FeatureSet {
        features,
        labels: split.iter().map(|p| p.label).collect(),
        pooling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esn::{build_network, EsnConfig};

    fn pattern(values: &[f64], label: usize) -> Pattern {
        Pattern {
            sequence: Mat::from_vec(values.len(), 1, values.to_vec()).unwrap(),
            label,
        }
    }

    fn net(sizes: &[usize], seed: u64) -> EsnNetwork {
        let m = sizes.len();
        build_network(&EsnConfig {
            layer_sizes: sizes.to_vec(),
            input_connectivity: 1.0,
            layer_connectivities: vec![0.3; m],
            inter_connectivities: vec![0.5; m - 1],
            ..EsnConfig::basic(1, 1.0, seed)
        })
        .unwrap()
    }

    #[test]
    fn zero_signals_reconstruct_exactly() {
        let split = vec![pattern(&[0.0; 10], 0), pattern(&[0.0; 10], 1)];
        let rae = fit_rae(&net(&[8], 1), &split, 1e-6).unwrap();
        assert_eq!(reconstruction_rmse(&rae, &split).unwrap(), 0.0);
        assert!(rae.readout_weights().unwrap().max_abs() == 0.0);
    }

    #[test]
    fn zero_readout_gives_signal_rms() {
        let split = vec![pattern(&[1.0, -1.0, 1.0, -1.0], 0), pattern(&[1.0, 1.0, -1.0, -1.0], 0)];
        let rae = net(&[5], 2).with_readout(Mat::zeros(1, 5)).unwrap();
        assert!((reconstruction_rmse(&rae, &split).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fitted_score_matches_recomputed_rmse() {
        let split: Vec<Pattern> = (0..4)
            .map(|p| pattern(&(0..20).map(|t| ((t * (p + 2)) as f64 * 0.3).sin()).collect::<Vec<_>>(), 0))
            .collect();
        let fitted = fit_and_score(&net(&[15, 10], 3), &split, 1e-6).unwrap();
        assert_eq!(fitted.rmse, reconstruction_rmse(&fitted.net, &split).unwrap());
    }

    #[test]
    fn untrained_and_empty_rejected() {
        let split = vec![pattern(&[0.5; 3], 0)];
        let n = net(&[4], 1);
        assert!(matches!(reconstruction_rmse(&n, &split), Err(Error::UntrainedReadout)));
        assert!(matches!(reconstruction_rmse(&n, &[]), Err(Error::Empty(_))));
        assert!(matches!(extract_features(&n, &[], Pooling::Last), Err(Error::Empty(_))));
    }

    #[test]
    fn single_step_pooling_coincides() {
        let split = vec![pattern(&[0.7], 0), pattern(&[-0.2], 1)];
        let n = net(&[6, 4], 9);
        let last = extract_features(&n, &split, Pooling::Last).unwrap();
        let mean = extract_features(&n, &split, Pooling::Mean).unwrap();
        let concat = extract_features(&n, &split, Pooling::Concat).unwrap();
        assert_eq!(last.features, mean.features);
        assert_eq!(last.features, concat.features);
        assert_eq!(last.labels, vec![0, 1]);
        assert_eq!(last.dim(), 4);
    }

    #[test]
    fn concat_dimension() {
        let split = vec![pattern(&[0.1, 0.2, 0.3], 0)];
        let f = extract_features(&net(&[5], 1), &split, Pooling::Concat).unwrap();
        assert_eq!(f.dim(), 15);
    }

    #[test]
    fn mean_pooling_matches_hand_rollout() {
        // one neuron: x1 = tanh(a u1), x2 = tanh(a u2 + w x1)
        let n = net(&[1], 21);
        let a = n.input_weights().to_dense()[(0, 0)];
        let w = n.layer_weights()[0].to_dense()[(0, 0)];
        let (u1, u2) = (0.8, -0.3);
        let x1 = (a * u1).tanh();
        let x2 = (a * u2 + w * x1).tanh();
        let f = extract_features(&n, &[pattern(&[u1, u2], 0)], Pooling::Mean).unwrap();
        assert!((f.features[0][0] - 0.5 * (x1 + x2)).abs() < 1e-15);
        let f = extract_features(&n, &[pattern(&[u1, u2], 0)], Pooling::Last).unwrap();
        assert!((f.features[0][0] - x2).abs() < 1e-15);
    }

    #[test]
    fn pooling_order_sensitivity() {
        let fwd: Vec<f64> = (0..12).map(|t| (t as f64 * 0.5).cos()).collect();
        let rev: Vec<f64> = fwd.iter().rev().copied().collect();
        let n = net(&[10], 4);
        let split = vec![pattern(&fwd, 0), pattern(&rev, 0)];
        let last = extract_features(&n, &split, Pooling::Last).unwrap();
        assert_ne!(last.features[0], last.features[1]);
        let concat = extract_features(&n, &split, Pooling::Concat).unwrap();
        assert_ne!(concat.features[0], concat.features[1]);
    }

    #[test]
    fn mean_pool_is_order_free_last_is_not() {
        let states = vec![vec![0.1, -0.2], vec![0.5, 0.3], vec![-0.4, 0.9]];
        let reversed: Vec<Vec<f64>> = states.iter().rev().cloned().collect();
        let a = pool_states(&states, Pooling::Mean);
        let b = pool_states(&reversed, Pooling::Mean);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert_ne!(pool_states(&states, Pooling::Last), pool_states(&reversed, Pooling::Last));
        assert_ne!(pool_states(&states, Pooling::Concat), pool_states(&reversed, Pooling::Concat));
    }

    #[test]
    fn features_ignore_readout() {
        let split = vec![pattern(&[0.3, 0.1, -0.4], 1)];
        let n = net(&[7], 5);
        let a = extract_features(&n, &split, Pooling::Mean).unwrap();
        let trained = fit_rae(&n, &split, 1e-3).unwrap();
        let b = extract_features(&trained, &split, Pooling::Mean).unwrap();
        assert_eq!(a, b);
    }
}
