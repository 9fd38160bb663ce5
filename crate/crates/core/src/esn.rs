//! Sparse random single- and multi-layer echo state networks.
//!
//! Layer 1 is driven by the input, layer `k > 1` by the state of layer `k-1`
//! at the same time step:
//!
//! ```text
//! x1(n+1) = tanh(W_in u(n+1) + W_1 x1(n))
//! xk(n+1) = tanh(W_inter(k-1) x(k-1)(n+1) + W_k xk(n))
//! y(n)    = W_out xM(n)
//! ```
//!
//! Every weight matrix keeps its raw values (uniform in `[-1, 1]` at the
//! mask positions) separately from a scalar gain; recurrent matrices get the
//! gain that brings their spectral radius to the configured target.

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::rng;

pub use crate::linalg::spectral_radius;

/// Radius below which a recurrent matrix is treated as nilpotent and left
/// unscaled.
pub const NILPOTENT_RADIUS: f64 = 1e-12;

fn default_dim() -> usize {
    1
}

fn default_spectral_radius() -> f64 {
    0.9
}

fn default_ridge_lambda() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsnConfig {
    pub layer_sizes: Vec<usize>,
    pub input_connectivity: f64,
    pub layer_connectivities: Vec<f64>,
    pub inter_connectivities: Vec<f64>,
    #[serde(default = "default_spectral_radius")]
    pub spectral_radius_target: f64,
    #[serde(default = "default_ridge_lambda")]
    pub ridge_lambda: f64,
    #[serde(default)]
    pub washout: usize,
    pub rng_seed: u64,
    #[serde(default = "default_dim")]
    pub input_dim: usize,
    #[serde(default = "default_dim")]
    pub output_dim: usize,
}

impl EsnConfig {
    /// Single-reservoir configuration with unit input/output dimension.
    pub fn basic(size: usize, connectivity: f64, rng_seed: u64) -> Self {
        EsnConfig {
            layer_sizes: vec![size],
            input_connectivity: 1.0,
            layer_connectivities: vec![connectivity],
            inter_connectivities: Vec::new(),
            spectral_radius_target: default_spectral_radius(),
            ridge_lambda: default_ridge_lambda(),
            washout: 0,
            rng_seed,
            input_dim: 1,
            output_dim: 1,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn last_layer_size(&self) -> usize {
        self.layer_sizes.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_layers();
        if m == 0 {
            return Err(Error::Config("at least one reservoir layer is required".into()));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Config("reservoir sizes must be at least 1".into()));
        }
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("input and output dimensions must be at least 1".into()));
        }
        if self.layer_connectivities.len() != m {
            return Err(Error::Config(format!(
                "{} layer connectivities for {m} layers",
                self.layer_connectivities.len()
            )));
        }
        if self.inter_connectivities.len() != m - 1 {
            return Err(Error::Config(format!(
                "{} inter-layer connectivities for {m} layers (expected {})",
                self.inter_connectivities.len(),
                m - 1
            )));
        }
        let conns = std::iter::once(&self.input_connectivity)
            .chain(&self.layer_connectivities)
            .chain(&self.inter_connectivities);
        for &c in conns {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::Config(format!("connectivity {c} outside (0, 1]")));
            }
        }
        if !(self.spectral_radius_target > 0.0 && self.spectral_radius_target.is_finite()) {
            return Err(Error::Config("spectral radius target must be positive".into()));
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(Error::Config("ridge lambda must be non-negative".into()));
        }
        Ok(())
    }
}

/// A weight matrix restricted to a fixed sparsity mask.
///
/// `positions` are flat row-major indices in increasing order; `raw[i]` is
/// the unscaled value at `positions[i]` and the effective weight is
/// `raw[i] * gain`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrix {
    rows: usize,
    cols: usize,
    positions: Vec<usize>,
    raw: Vec<f64>,
    gain: f64,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Number of non-zeros for a connectivity rate: `round(c * total)`, at least
/// one for any positive rate.
pub fn nonzero_count(connectivity: f64, rows: usize, cols: usize) -> usize {
    let total = rows * cols;
    let k = (connectivity * total as f64).round() as usize;
    k.clamp(1, total)
}

impl MaskedMatrix {
    fn sample(rows: usize, cols: usize, connectivity: f64, rng: &mut rng::Rng) -> Self {
        let total = rows * cols;
        let nnz = nonzero_count(connectivity, rows, cols);
        let mut positions = index::sample(rng, total, nnz).into_vec();
        positions.sort_unstable();
        let raw = positions.iter().map(|_| rng.random_range(-1.0..=1.0)).collect();
        MaskedMatrix::from_parts(rows, cols, positions, raw, 1.0)
    }

    fn from_parts(rows: usize, cols: usize, positions: Vec<usize>, raw: Vec<f64>, gain: f64) -> Self {
        let mut m = MaskedMatrix {
            rows,
            cols,
            positions,
            raw,
            gain,
            row_ptr: Vec::new(),
            col_idx: Vec::new(),
            values: Vec::new(),
        };
        m.rebuild();
        m
    }

    fn rebuild(&mut self) {
        let mut row_ptr = vec![0; self.rows + 1];
        for &p in &self.positions {
            row_ptr[p / self.cols + 1] += 1;
        }
        for i in 0..self.rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        self.row_ptr = row_ptr;
        self.col_idx = self.positions.iter().map(|&p| p % self.cols).collect();
        self.values = self.raw.iter().map(|&v| v * self.gain).collect();
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn density(&self) -> f64 {
        self.nnz() as f64 / (self.rows * self.cols) as f64
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.rows * self.cols];
        for &p in &self.positions {
            mask[p] = true;
        }
        mask
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.rows, self.cols);
        for (&p, &v) in self.positions.iter().zip(&self.values) {
            m.as_mut_slice()[p] = v;
        }
        m
    }

    pub fn raw_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.rows, self.cols);
        for (&p, &v) in self.positions.iter().zip(&self.raw) {
            m.as_mut_slice()[p] = v;
        }
        m
    }

    pub(crate) fn set_raw(&mut self, raw: &[f64]) {
        self.raw.copy_from_slice(raw);
        self.rebuild();
    }

    pub(crate) fn set_gain(&mut self, gain: f64) {
        self.gain = gain;
        self.values = self.raw.iter().map(|&v| v * gain).collect();
    }

    /// Set the gain so the effective spectral radius equals `target`.
    /// Returns `false` (gain 1) when the raw matrix is nilpotent to tolerance.
    pub(crate) fn normalise_spectral_radius(&mut self, target: f64) -> Result<bool> {
        let rho = linalg::spectral_radius(&self.raw_dense())?;
        if rho < NILPOTENT_RADIUS {
            self.set_gain(1.0);
            Ok(false)
        } else {
            self.set_gain(target / rho);
            Ok(true)
        }
    }

    /// `out[i, :] += Σ_j W[i, j] x[j, :]` where `x` and `out` are row-major
    /// with `width` columns.
    #[inline]
    fn accumulate(&self, x: &[f64], out: &mut [f64], width: usize) {
        for i in 0..self.rows {
            let dst = &mut out[i * width..(i + 1) * width];
            for e in self.row_ptr[i]..self.row_ptr[i + 1] {
                let w = self.values[e];
                let j = self.col_idx[e];
                let src = &x[j * width..(j + 1) * width];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }

    /// The product kernel for a batch run: a dense copy fed to GEMM once the
    /// matrix is dense enough that the sparse loop does no less work.
    fn kernel(&self) -> Kernel<'_> {
        if self.rows * self.cols > 0 && self.nnz() as f64 >= DENSE_FRACTION * (self.rows * self.cols) as f64 {
            let mut dense = vec![0.0; self.rows * self.cols];
            for (&p, &v) in self.positions.iter().zip(&self.values) {
                dense[p] = v;
            }
            Kernel::Dense(self, dense)
        } else {
            Kernel::Sparse(self)
        }
    }
}

/// Density above which a batch product goes through dense GEMM.
const DENSE_FRACTION: f64 = 0.15;

enum Kernel<'a> {
    Sparse(&'a MaskedMatrix),
    Dense(&'a MaskedMatrix, Vec<f64>),
}

impl Kernel<'_> {
    #[inline]
    fn accumulate(&self, x: &[f64], out: &mut [f64], width: usize) {
        match self {
            Kernel::Sparse(m) => m.accumulate(x, out, width),
            Kernel::Dense(m, w) => linalg::gemm(m.rows, m.cols, width, 1.0, (w, m.cols, 1), (x, width, 1), 1.0, out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsnNetwork {
    config: EsnConfig,
    w_in: MaskedMatrix,
    w_layer: Vec<MaskedMatrix>,
    w_inter: Vec<MaskedMatrix>,
    unscaled_layers: Vec<bool>,
    w_out: Option<Mat>,
}

/// Sample a network. Deterministic in `config.rng_seed`; each matrix draws
/// from its own stream so resizing one layer leaves the others' streams
/// intact.
pub fn build_network(config: &EsnConfig) -> Result<EsnNetwork> {
    config.validate()?;
    let seed = config.rng_seed;
    let sizes = &config.layer_sizes;
    let w_in = MaskedMatrix::sample(
        sizes[0],
        config.input_dim,
        config.input_connectivity,
        &mut rng::rng_for(seed, &[0]),
    );
    let w_layer = sizes
        .iter()
        .zip(&config.layer_connectivities)
        .enumerate()
        .map(|(k, (&n, &c))| MaskedMatrix::sample(n, n, c, &mut rng::rng_for(seed, &[1, k as u64])))
        .collect();
    let w_inter = config
        .inter_connectivities
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            MaskedMatrix::sample(sizes[k + 1], sizes[k], c, &mut rng::rng_for(seed, &[2, k as u64]))
        })
        .collect();
    let mut net = EsnNetwork {
        config: config.clone(),
        w_in,
        w_layer,
        w_inter,
        unscaled_layers: Vec::new(),
        w_out: None,
    };
    net.rescale()?;
    Ok(net)
}

/// Per-layer state sequences of one pattern: `layers[k][n]` is the state of
/// layer `k` after input step `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub layers: Vec<Vec<Vec<f64>>>,
}

impl StateTrajectory {
    pub fn last_layer(&self) -> &[Vec<f64>] {
        self.layers.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn steps(&self) -> usize {
        self.layers.first().map_or(0, Vec::len)
    }
}

/// States of a batch of equal-length patterns for one layer, stored
/// neuron-major: row `i` holds neuron `i` for every sample, sample
/// `t * batch + p` being step `t` of pattern `p`.
#[derive(Debug, Clone)]
pub(crate) struct BatchStates {
    pub steps: usize,
    pub batch: usize,
    pub states: Mat,
}

impl BatchStates {
    pub fn sample(&self, t: usize, p: usize) -> usize {
        t * self.batch + p
    }
}

impl EsnNetwork {
    pub fn config(&self) -> &EsnConfig {
        &self.config
    }

    pub fn num_layers(&self) -> usize {
        self.w_layer.len()
    }

    pub fn input_weights(&self) -> &MaskedMatrix {
        &self.w_in
    }

    pub fn layer_weights(&self) -> &[MaskedMatrix] {
        &self.w_layer
    }

    pub fn inter_weights(&self) -> &[MaskedMatrix] {
        &self.w_inter
    }

    /// Layers whose recurrent matrix was nilpotent to tolerance and so kept
    /// their raw scale.
    pub fn unscaled_layers(&self) -> Vec<usize> {
        self.unscaled_layers
            .iter()
            .enumerate()
            .filter(|(_, &u)| u)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn readout_weights(&self) -> Option<&Mat> {
        self.w_out.as_ref()
    }

    pub fn is_trained(&self) -> bool {
        self.w_out.is_some()
    }

    pub fn with_readout(mut self, w_out: Mat) -> Result<Self> {
        if w_out.rows() != self.config.output_dim || w_out.cols() != self.config.last_layer_size() {
            return Err(Error::Dimension(format!(
                "readout {}x{} for output dim {} and last layer size {}",
                w_out.rows(),
                w_out.cols(),
                self.config.output_dim,
                self.config.last_layer_size()
            )));
        }
        self.w_out = Some(w_out);
        Ok(self)
    }

    pub fn clear_readout(&mut self) {
        self.w_out = None;
    }

    /// All matrices in canonical order: input, recurrent 1..M, inter 1..M-1.
    pub(crate) fn matrices(&self) -> impl Iterator<Item = &MaskedMatrix> {
        std::iter::once(&self.w_in)
            .chain(self.w_layer.iter())
            .chain(self.w_inter.iter())
    }

    pub(crate) fn matrices_mut(&mut self) -> impl Iterator<Item = &mut MaskedMatrix> {
        std::iter::once(&mut self.w_in)
            .chain(self.w_layer.iter_mut())
            .chain(self.w_inter.iter_mut())
    }

    /// Bring every recurrent matrix to the target spectral radius.
    pub(crate) fn rescale(&mut self) -> Result<()> {
        let target = self.config.spectral_radius_target;
        let mut unscaled = Vec::with_capacity(self.w_layer.len());
        for w in &mut self.w_layer {
            unscaled.push(!w.normalise_spectral_radius(target)?);
        }
        self.unscaled_layers = unscaled;
        Ok(())
    }

    fn check_inputs(&self, inputs: &[&Mat]) -> Result<usize> {
        let d = self.config.input_dim;
        let steps = inputs.first().map_or(0, |u| u.rows());
        for u in inputs {
            if u.cols() != d {
                return Err(Error::Dimension(format!(
                    "input has {} channels, network expects {d}",
                    u.cols()
                )));
            }
            if u.rows() != steps {
                return Err(Error::Dimension("patterns in a batch must share their length".into()));
            }
        }
        Ok(steps)
    }

    /// Drive a batch of equal-length patterns from the given initial states
    /// (zero when `None`) and return the full trajectories of the layers
    /// selected by `keep`.
    pub(crate) fn run_batch_from(
        &self,
        inputs: &[&Mat],
        initial: Option<&[Vec<Vec<f64>>]>,
        keep: &[bool],
    ) -> Result<Vec<Option<BatchStates>>> {
        let steps = self.check_inputs(inputs)?;
        let batch = inputs.len();
        let d = self.config.input_dim;
        let sizes = &self.config.layer_sizes;
        let m = sizes.len();

        let mut prev: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n * batch]).collect();
        if let Some(init) = initial {
            if init.len() != batch {
                return Err(Error::Dimension("one initial state per pattern is required".into()));
            }
            for (p, layers) in init.iter().enumerate() {
                if layers.len() != m {
                    return Err(Error::Dimension("initial state needs every layer".into()));
                }
                for (k, x) in layers.iter().enumerate() {
                    if x.len() != sizes[k] {
                        return Err(Error::Dimension(format!(
                            "initial state of layer {k} has length {}, expected {}",
                            x.len(),
                            sizes[k]
                        )));
                    }
                    for (i, &v) in x.iter().enumerate() {
                        prev[k][i * batch + p] = v;
                    }
                }
            }
        }
        let mut cur: Vec<Vec<f64>> = prev.iter().map(|v| vec![0.0; v.len()]).collect();
        let mut kept: Vec<Option<Mat>> = (0..m)
            .map(|k| keep.get(k).copied().unwrap_or(false).then(|| Mat::zeros(sizes[k], steps * batch)))
            .collect();
        let mut u_t = vec![0.0; d * batch];
        let w_in = self.w_in.kernel();
        let w_layer: Vec<Kernel> = self.w_layer.iter().map(MaskedMatrix::kernel).collect();
        let w_inter: Vec<Kernel> = self.w_inter.iter().map(MaskedMatrix::kernel).collect();

        for t in 0..steps {
            for (p, u) in inputs.iter().enumerate() {
                for (j, &v) in u.row(t).iter().enumerate() {
                    u_t[j * batch + p] = v;
                }
            }
            for k in 0..m {
                let (before, rest) = cur.split_at_mut(k);
                let out = &mut rest[0];
                out.iter_mut().for_each(|v| *v = 0.0);
                if k == 0 {
                    w_in.accumulate(&u_t, out, batch);
                } else {
                    w_inter[k - 1].accumulate(&before[k - 1], out, batch);
                }
                w_layer[k].accumulate(&prev[k], out, batch);
                out.iter_mut().for_each(|v| *v = v.tanh());
                if let Some(store) = kept[k].as_mut() {
                    let s = steps * batch;
                    let data = store.as_mut_slice();
                    for i in 0..sizes[k] {
                        data[i * s + t * batch..i * s + (t + 1) * batch]
                            .copy_from_slice(&out[i * batch..(i + 1) * batch]);
                    }
                }
            }
            std::mem::swap(&mut prev, &mut cur);
        }
        Ok(kept
            .into_iter()
            .map(|s| {
                s.map(|states| BatchStates {
                    steps,
                    batch,
                    states,
                })
            })
            .collect())
    }

    pub(crate) fn run_batch_last(&self, inputs: &[&Mat]) -> Result<BatchStates> {
        let mut keep = vec![false; self.num_layers()];
        *keep.last_mut().expect("validated network has a layer") = true;
        let mut out = self.run_batch_from(inputs, None, &keep)?;
        Ok(out.pop().flatten().expect("last layer was kept"))
    }

    /// Apply the readout to every column of a neuron-major state block.
    pub(crate) fn readout_block(&self, states: &BatchStates) -> Result<Mat> {
        let w_out = self.w_out.as_ref().ok_or(Error::UntrainedReadout)?;
        w_out.matmul(&states.states)
    }
}

/// Run one pattern (rows = time steps, columns = input channels) from the
/// zero state.
pub fn run_sequence(net: &EsnNetwork, u: &Mat) -> Result<StateTrajectory> {
    run_sequence_from(net, u, None)
}

/// Run one pattern from an explicit initial state (one vector per layer).
pub fn run_sequence_from(
    net: &EsnNetwork,
    u: &Mat,
    initial: Option<&[Vec<f64>]>,
) -> Result<StateTrajectory> {
    let init = initial.map(|layers| vec![layers.to_vec()]);
    let keep = vec![true; net.num_layers()];
    let blocks = net.run_batch_from(&[u], init.as_deref(), &keep)?;
    let layers = blocks
        .into_iter()
        .map(|b| {
            let b = b.expect("all layers kept");
            let n = b.states.rows();
            (0..b.steps)
                .map(|t| (0..n).map(|i| b.states[(i, t)]).collect())
                .collect()
        })
        .collect();
    Ok(StateTrajectory { layers })
}

/// Ridge readout from a neuron-major state block `z` (`n x s`) and targets
/// `y` (`d x s`), using columns from `col_start` on. Returns `W_out` (`d x n`).
pub(crate) fn ridge_readout_columns(
    z: &Mat,
    y: &Mat,
    col_start: usize,
    lambda: f64,
) -> Result<Mat> {
    let n = z.rows();
    let s = z.cols();
    if y.cols() != s {
        return Err(Error::Dimension(format!(
            "{} state samples against {} targets",
            s,
            y.cols()
        )));
    }
    if col_start >= s {
        return Err(Error::Empty("no state samples left after washout"));
    }
    let d = y.rows();
    let mut gram = linalg::gram_of_rows(z.as_slice(), n, s, col_start);
    for i in 0..n {
        gram[(i, i)] += lambda;
    }
    // rhs = Z Yᵀ (n x d)
    let mut rhs = Mat::zeros(n, d);
    let width = s - col_start;
    linalg::gemm(
        n,
        width,
        d,
        1.0,
        (&z.as_slice()[col_start..], s, 1),
        (&y.as_slice()[col_start..], 1, s),
        0.0,
        rhs.as_mut_slice(),
    );
    let w_t = linalg::solve_spd(&gram, &rhs)?;
    Ok(w_t.transpose())
}

/// Train the linear readout by ridge regression:
/// `W_out = argmin ‖W X − Y‖² + λ‖W‖²` with one state vector per row of
/// `states` and the matching target in the same row of `targets`.
pub fn train_readout(net: &EsnNetwork, states: &Mat, targets: &Mat, lambda: f64) -> Result<EsnNetwork> {
    if states.rows() != targets.rows() {
        return Err(Error::Dimension(format!(
            "{} state vectors against {} targets",
            states.rows(),
            targets.rows()
        )));
    }
    if states.rows() == 0 {
        return Err(Error::Empty("no state vectors"));
    }
    if states.cols() != net.config.last_layer_size() {
        return Err(Error::Dimension(format!(
            "state vectors of length {}, last layer has {} neurons",
            states.cols(),
            net.config.last_layer_size()
        )));
    }
    if targets.cols() != net.config.output_dim {
        return Err(Error::Dimension(format!(
            "targets of length {}, network output dimension is {}",
            targets.cols(),
            net.config.output_dim
        )));
    }
    let w_out = ridge_readout_columns(&states.transpose(), &targets.transpose(), 0, lambda)?;
    net.clone().with_readout(w_out)
}

/// `y = W_out x` (identity output activation).
pub fn readout(net: &EsnNetwork, x: &[f64]) -> Result<Vec<f64>> {
    let w_out = net.w_out.as_ref().ok_or(Error::UntrainedReadout)?;
    w_out.matvec(x)
}

/// Root-mean-square error over all scalar comparisons.
pub fn rmse(targets: &[f64], outputs: &[f64]) -> Result<f64> {
    if targets.len() != outputs.len() {
        return Err(Error::Dimension(format!(
            "{} targets against {} outputs",
            targets.len(),
            outputs.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::Empty("rmse of nothing"));
    }
    let sum: f64 = targets.iter().zip(outputs).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sum / targets.len() as f64).sqrt())
}

/// RMSE over collections of sequences (patterns × steps × channels).
pub fn rmse_sequences(targets: &[Mat], outputs: &[Mat]) -> Result<f64> {
    if targets.len() != outputs.len() {
        return Err(Error::Dimension(format!(
            "{} target sequences against {} outputs",
            targets.len(),
            outputs.len()
        )));
    }
    for (a, b) in targets.iter().zip(outputs) {
        if a.rows() != b.rows() || a.cols() != b.cols() {
            return Err(Error::Dimension("sequence shapes differ".into()));
        }
    }
    let t: Vec<f64> = targets.iter().flat_map(|m| m.as_slice().iter().copied()).collect();
    let o: Vec<f64> = outputs.iter().flat_map(|m| m.as_slice().iter().copied()).collect();
    rmse(&t, &o)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(sizes: &[usize], conn: f64, seed: u64) -> EsnConfig {
        let m = sizes.len();
        EsnConfig {
            layer_sizes: sizes.to_vec(),
            input_connectivity: 1.0,
            layer_connectivities: vec![conn; m],
            inter_connectivities: vec![conn; m - 1],
            rng_seed: seed,
            ..EsnConfig::basic(1, 1.0, seed)
        }
    }

    fn column(values: &[f64]) -> Mat {
        Mat::from_vec(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn one_neuron_recurrent_weight_hits_target() {
        let net = build_network(&cfg(&[1], 1.0, 3)).unwrap();
        let w = net.layer_weights()[0].to_dense();
        assert!((w[(0, 0)].abs() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn inter_mask_density() {
        let mut c = cfg(&[10, 10], 0.3, 11);
        c.inter_connectivities = vec![0.5];
        let net = build_network(&c).unwrap();
        let nnz = net.inter_weights()[0].nnz();
        assert!((49..=51).contains(&nnz), "nnz = {nnz}");
    }

    #[test]
    fn same_seed_same_network() {
        let c = cfg(&[20, 15], 0.2, 99);
        assert_eq!(build_network(&c).unwrap(), build_network(&c).unwrap());
        let mut other = c.clone();
        other.rng_seed = 100;
        assert_ne!(build_network(&c).unwrap(), build_network(&other).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = cfg(&[5], 0.5, 1);
        c.layer_sizes = vec![0];
        assert!(matches!(build_network(&c), Err(Error::Config(_))));
        let mut c = cfg(&[5], 0.5, 1);
        c.layer_connectivities = vec![0.0];
        assert!(matches!(build_network(&c), Err(Error::Config(_))));
        let mut c = cfg(&[5], 0.5, 1);
        c.input_connectivity = 1.5;
        assert!(matches!(build_network(&c), Err(Error::Config(_))));
        let mut c = cfg(&[5, 5], 0.5, 1);
        c.inter_connectivities.clear();
        assert!(matches!(build_network(&c), Err(Error::Config(_))));
    }

    #[test]
    fn scalar_state_update() {
        // W_in = 0.5, W = 0 via a 1x1 net whose recurrent raw weight is zeroed
        let mut net = build_network(&cfg(&[1], 1.0, 5)).unwrap();
        net.w_in.set_raw(&[0.5]);
        net.w_layer[0].set_raw(&[0.0]);
        let traj = run_sequence(&net, &column(&[1.0])).unwrap();
        assert!((traj.layers[0][0][0] - 0.5_f64.tanh()).abs() < 1e-15);
        assert!((traj.layers[0][0][0] - 0.46212).abs() < 1e-5);
    }

    #[test]
    fn zero_input_gives_zero_states() {
        let net = build_network(&cfg(&[8, 6], 0.4, 2)).unwrap();
        let traj = run_sequence(&net, &column(&[0.0; 12])).unwrap();
        assert!(traj.layers.iter().flatten().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn input_dimension_mismatch() {
        let net = build_network(&cfg(&[4], 0.5, 2)).unwrap();
        let u = Mat::zeros(3, 2);
        assert!(matches!(run_sequence(&net, &u), Err(Error::Dimension(_))));
    }

    #[test]
    fn batch_equals_individual_runs() {
        let net = build_network(&cfg(&[12, 7], 0.3, 8)).unwrap();
        let a = column(&[0.1, -0.4, 0.9, 0.3, -1.2]);
        let b = column(&[1.0, 0.0, -0.5, 0.25, 0.75]);
        let batch = net.run_batch_last(&[&a, &b]).unwrap();
        for (p, u) in [&a, &b].into_iter().enumerate() {
            let single = run_sequence(&net, u).unwrap();
            for (t, x) in single.last_layer().iter().enumerate() {
                for (i, &v) in x.iter().enumerate() {
                    assert_eq!(batch.states[(i, batch.sample(t, p))], v);
                }
            }
        }
    }

    #[test]
    fn readout_identity_and_zero() {
        let net = build_network(&cfg(&[2], 1.0, 1)).unwrap();
        assert!(matches!(readout(&net, &[1.0, 2.0]), Err(Error::UntrainedReadout)));
        let net = net.with_readout(Mat::zeros(1, 2)).unwrap();
        assert_eq!(readout(&net, &[1.0, 2.0]).unwrap(), vec![0.0]);

        let mut c = cfg(&[2], 1.0, 1);
        c.output_dim = 2;
        let net = build_network(&c).unwrap().with_readout(Mat::identity(2)).unwrap();
        assert_eq!(readout(&net, &[0.3, -0.7]).unwrap(), vec![0.3, -0.7]);
        let w = Mat::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();
        let net = net.with_readout(w).unwrap();
        // [1*2 + 2*(-1), -3*2 + 0.5*(-1)]
        assert_eq!(readout(&net, &[2.0, -1.0]).unwrap(), vec![0.0, -6.5]);
    }

    #[test]
    fn ridge_interpolates_basis() {
        let mut c = cfg(&[3], 1.0, 1);
        c.output_dim = 3;
        let net = build_network(&c).unwrap();
        let x = Mat::identity(3);
        let trained = train_readout(&net, &x, &x, 0.0).unwrap();
        let w = trained.readout_weights().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((w[(i, j)] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn ridge_shrinks_to_zero() {
        let net = build_network(&cfg(&[3], 1.0, 1)).unwrap();
        let x = Mat::from_rows(&[vec![1.0, 0.2, 0.0], vec![0.0, 1.0, 0.5], vec![0.3, 0.0, 1.0]]).unwrap();
        let y = Mat::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let trained = train_readout(&net, &x, &y, 1e12).unwrap();
        assert!(trained.readout_weights().unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn singular_unregularised_readout_fails() {
        let net = build_network(&cfg(&[3], 1.0, 1)).unwrap();
        let x = Mat::from_rows(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0]]).unwrap();
        let y = Mat::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(train_readout(&net, &x, &y, 0.0), Err(Error::IllConditioned(_))));
        let y = Mat::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(train_readout(&net, &x, &y, 0.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!((rmse(&[0.0, 2.0], &[0.0, 0.0]).unwrap() - 2.0_f64.sqrt()).abs() < 1e-15);
        assert!(matches!(rmse(&[], &[]), Err(Error::Empty(_))));
        assert!(matches!(rmse(&[1.0], &[]), Err(Error::Dimension(_))));
    }

    #[test]
    fn nilpotent_layer_flagged() {
        // 2x2 with a single off-diagonal entry is nilpotent
        let mut net = build_network(&cfg(&[2], 0.25, 4)).unwrap();
        let pos = net.layer_weights()[0].positions()[0];
        let diagonal = pos == 0 || pos == 3;
        assert_eq!(net.unscaled_layers().is_empty(), diagonal);
        net.rescale().unwrap();
        assert_eq!(net.unscaled_layers().is_empty(), diagonal);
    }
}
