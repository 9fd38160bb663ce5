//! Linear one-vs-all classifiers on standardised features, accuracy and
//! confusion matrices.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::rae::FeatureSet;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    /// Closed-form ridge regression onto ±1 targets.
    RidgeOva,
    /// L2-regularised hinge loss, dual coordinate descent.
    #[default]
    #[serde(alias = "svm")]
    LinearSvm,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::RidgeOva => "ridge",
            ClassifierKind::LinearSvm => "svm",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ridge" | "ridge_ova" => Ok(ClassifierKind::RidgeOva),
            "svm" | "linear_svm" => Ok(ClassifierKind::LinearSvm),
            other => Err(Error::Config(format!("unknown classifier `{other}` (expected svm or ridge)"))),
        }
    }
}

fn default_c() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    1.0
}
fn default_tolerance() -> f64 {
    1e-4
}
fn default_max_epochs() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    #[serde(default)]
    pub kind: ClassifierKind,
    /// SVM box constraint.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Ridge penalty (bias unpenalised).
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// SVM stopping threshold on the projected-gradient spread.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        ClassifierParams {
            kind: ClassifierKind::default(),
            c: default_c(),
            lambda: default_lambda(),
            tolerance: default_tolerance(),
            max_epochs: default_max_epochs(),
        }
    }
}

/// Per-dimension z-scoring; a zero-variance dimension keeps scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty("no training features"));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("feature vectors of differing length".into()));
        }
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n as f64).sqrt();
                // spread at rounding level of the mean counts as constant
                if sd > 1e-12 * m.abs().max(1.0) && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub kind: ClassifierKind,
    /// One weight vector per class, in standardised feature space.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub standardizer: Standardizer,
}

impl ClassifierModel {
    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    /// Per-class scores of a raw feature vector.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "feature vector of length {}, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        let z = self.standardizer.apply(x);
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, &z) + b)
            .collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn train_classifier(train: &FeatureSet, num_classes: usize, params: &ClassifierParams) -> Result<ClassifierModel> {
    if train.is_empty() {
        return Err(Error::Empty("no training features"));
    }
    if train.labels.len() != train.features.len() {
        return Err(Error::Dimension("feature and label counts differ".into()));
    }
    if num_classes < 2 {
        return Err(Error::Data("classification needs at least two classes".into()));
    }
    let mut present = vec![false; num_classes];
    for &l in &train.labels {
        if l >= num_classes {
            return Err(Error::Data(format!("label {l} outside {num_classes} classes")));
        }
        present[l] = true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(Error::Data(format!("class {missing} has no training example")));
    }
    let standardizer = Standardizer::fit(&train.features)?;
    let z: Vec<Vec<f64>> = train.features.iter().map(|x| standardizer.apply(x)).collect();
    let mut weights = Vec::with_capacity(num_classes);
    let mut biases = Vec::with_capacity(num_classes);
    for class in 0..num_classes {
        let y: Vec<f64> = train
            .labels
            .iter()
            .map(|&l| if l == class { 1.0 } else { -1.0 })
            .collect();
        let (w, b) = match params.kind {
            ClassifierKind::RidgeOva => ridge_binary(&z, &y, params.lambda)?,
            ClassifierKind::LinearSvm => svm_binary(&z, &y, params.c, params.tolerance, params.max_epochs)?,
        };
        weights.push(w);
        biases.push(b);
    }
    Ok(ClassifierModel {
        kind: params.kind,
        weights,
        biases,
        standardizer,
    })
}

/// Ridge fit with an unpenalised bias on zero-mean columns: the bias is the
/// target mean and `w` solves the centred problem, in dual form when there
/// are more dimensions than examples.
fn ridge_binary(z: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<(Vec<f64>, f64)> {
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("ridge penalty {lambda} must be non-negative")));
    }
    let n = z.len();
    let d = z[0].len();
    let bias = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - bias).collect();
    let x = Mat::from_rows(z)?;
    let w = if d <= n {
        let xt = x.transpose();
        let mut a = xt.matmul(&x)?;
        for i in 0..d {
            a.as_mut_slice()[i * d + i] += lambda;
        }
        let rhs = xt.matvec(&yc)?;
        linalg::solve_spd(&a, &Mat::from_vec(d, 1, rhs)?)?.into_vec()
    } else {
        let mut k = x.matmul(&x.transpose())?;
        for i in 0..n {
            k.as_mut_slice()[i * n + i] += lambda;
        }
        let alpha = linalg::solve_spd(&k, &Mat::from_vec(n, 1, yc)?)?.into_vec();
        x.transpose().matvec(&alpha)?
    };
    Ok((w, bias))
}

/// Dual coordinate descent for the L1-loss (hinge) linear SVM with the bias
/// folded in as a constant feature; coordinates are visited cyclically.
fn svm_binary(z: &[Vec<f64>], y: &[f64], c: f64, tol: f64, max_epochs: usize) -> Result<(Vec<f64>, f64)> {
    if !(c > 0.0) {
        return Err(Error::Config(format!("SVM C = {c} must be positive")));
    }
    let n = z.len();
    let d = z[0].len();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut alpha = vec![0.0; n];
    let qii: Vec<f64> = z.iter().map(|x| dot(x, x) + 1.0).collect();
    for epoch in 0..max_epochs {
        let mut max_pg = f64::NEG_INFINITY;
        let mut min_pg = f64::INFINITY;
        for i in 0..n {
            let g = y[i] * (dot(&w, &z[i]) + b) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            max_pg = max_pg.max(pg);
            min_pg = min_pg.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / qii[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * y[i];
                for (wj, xj) in w.iter_mut().zip(&z[i]) {
                    *wj += step * xj;
                }
                b += step;
            }
        }
        if max_pg - min_pg < tol {
            log::trace!("svm converged after {} epochs", epoch + 1);
            return Ok((w, b));
        }
    }
    log::debug!("svm stopped at the epoch limit {max_epochs}");
    Ok((w, b))
}

pub fn predict(model: &ClassifierModel, features: &[Vec<f64>]) -> Result<Vec<usize>> {
    features.iter().map(|x| model.scores(x).map(|s| argmax(&s))).collect()
}

/// Fraction of positions where `predicted` equals `actual`.
pub fn accuracy(predicted: &[usize], actual: &[usize]) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::Empty("accuracy of no predictions"));
    }
    if predicted.len() != actual.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    let hits = predicted.iter().zip(actual).filter(|(p, a)| p == a).count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// `counts[i][j]`: patterns of actual class `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.correct(), self.total())
    }

    /// Per actual class: share predicted correctly (row summary).
    pub fn recall(&self) -> Vec<f64> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| ratio(row[i], row.iter().sum()))
            .collect()
    }

    /// Per predicted class: share that was correct (column summary).
    pub fn precision(&self) -> Vec<f64> {
        (0..self.num_classes())
            .map(|j| ratio(self.counts[j][j], self.counts.iter().map(|r| r[j]).sum()))
            .collect()
    }

    /// Counts with row recall, column precision and overall accuracy, all
    /// in percent with one decimal. Empty rows or columns report `NaN`.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let k = self.num_classes();
        let name = |i: usize| class_names.get(i).cloned().unwrap_or_else(|| i.to_string());
        let mut s = String::from("actual\\predicted");
        for j in 0..k {
            let _ = write!(s, ",{}", name(j));
        }
        s.push_str(",recall_pct\n");
        let recall = self.recall();
        for i in 0..k {
            s.push_str(&name(i));
            for j in 0..k {
                let _ = write!(s, ",{}", self.counts[i][j]);
            }
            let _ = writeln!(s, ",{}", pct(recall[i]));
        }
        s.push_str("precision_pct");
        for p in self.precision() {
            let _ = write!(s, ",{}", pct(p));
        }
        let _ = writeln!(s, ",{}", pct(self.accuracy()));
        s
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

fn pct(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{:.1}", 100.0 * v)
    }
}

pub fn confusion_matrix(predicted: &[usize], actual: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if predicted.len() != actual.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    let mut counts = vec![vec![0; num_classes]; num_classes];
    for (&p, &a) in predicted.iter().zip(actual) {
        if p >= num_classes || a >= num_classes {
            return Err(Error::Data(format!("label outside {num_classes} classes")));
        }
        counts[a][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rae::Pooling;

    fn set(features: Vec<Vec<f64>>, labels: Vec<usize>) -> FeatureSet {
        FeatureSet {
            features,
            labels,
            pooling: Pooling::Last,
        }
    }

    fn toy() -> FeatureSet {
        set(
            vec![
                vec![0.0, 0.0],
                vec![1.0, 0.2],
                vec![0.3, 1.0],
                vec![3.0, 3.0],
                vec![4.0, 3.5],
                vec![3.2, 4.1],
            ],
            vec![0, 0, 0, 1, 1, 1],
        )
    }

    #[test]
    fn separable_toy_fits_perfectly() {
        for kind in [ClassifierKind::LinearSvm, ClassifierKind::RidgeOva] {
            let params = ClassifierParams {
                kind,
                ..ClassifierParams::default()
            };
            let data = toy();
            let model = train_classifier(&data, 2, &params).unwrap();
            let pred = predict(&model, &data.features).unwrap();
            assert_eq!(pred, data.labels, "{kind}");
        }
    }

    #[test]
    fn missing_class_rejected() {
        let data = set(vec![vec![1.0], vec![2.0]], vec![0, 0]);
        assert!(train_classifier(&data, 2, &ClassifierParams::default()).is_err());
        assert!(train_classifier(&data, 1, &ClassifierParams::default()).is_err());
    }

    #[test]
    fn zero_weights_predict_class_zero() {
        let model = ClassifierModel {
            kind: ClassifierKind::RidgeOva,
            weights: vec![vec![0.0; 2]; 3],
            biases: vec![0.0; 3],
            standardizer: Standardizer {
                mean: vec![0.0; 2],
                std: vec![1.0; 2],
            },
        };
        assert_eq!(predict(&model, &[vec![5.0, -1.0], vec![0.0, 2.0]]).unwrap(), vec![0, 0]);
        assert!(model.scores(&[1.0]).is_err());
    }

    #[test]
    fn scores_are_hand_dot_products() {
        let model = ClassifierModel {
            kind: ClassifierKind::LinearSvm,
            weights: vec![vec![1.0, -2.0], vec![0.5, 0.5]],
            biases: vec![0.1, -0.3],
            standardizer: Standardizer {
                mean: vec![1.0, 0.0],
                std: vec![2.0, 1.0],
            },
        };
        // z = ((3 - 1)/2, 4) = (1, 4)
        let s = model.scores(&[3.0, 4.0]).unwrap();
        assert!((s[0] - (1.0 - 8.0 + 0.1)).abs() < 1e-15);
        assert!((s[1] - (0.5 + 2.0 - 0.3)).abs() < 1e-15);
        assert_eq!(argmax(&s), 1);
    }

    #[test]
    fn zero_variance_dimension_kept() {
        let st = Standardizer::fit(&[vec![1.0, 2.0], vec![1.0, 4.0]]).unwrap();
        assert_eq!(st.std, vec![1.0, 1.0]);
        assert_eq!(st.apply(&[1.0, 3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        let pred = [0, 0, 0, 0, 0, 0, 0, 0, 0, 1];
        assert_eq!(accuracy(&pred, &[0; 10]).unwrap(), 0.9);
        assert_eq!(accuracy(&[1, 1], &[0, 0]).unwrap(), 0.0);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn confusion_summaries() {
        let perfect = confusion_matrix(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(perfect.counts, vec![vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 1]]);
        assert!(confusion_matrix(&[3], &[0], 3).is_err());

        // actual 0: 29 right, 7 called 1; actual 1: 1 called 0, 63 right
        let m = ConfusionMatrix {
            counts: vec![vec![29, 7], vec![1, 63]],
        };
        assert_eq!(m.total(), 100);
        assert!((m.accuracy() - 0.92).abs() < 1e-15);
        let csv = m.to_csv(&["-1".into(), "1".into()]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "actual\\predicted,-1,1,recall_pct");
        assert_eq!(lines[1], "-1,29,7,80.6");
        assert_eq!(lines[2], "1,1,63,98.4");
        assert_eq!(lines[3], "precision_pct,96.7,90.0,92.0");
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("svm".parse::<ClassifierKind>().unwrap(), ClassifierKind::LinearSvm);
        assert_eq!("ridge".parse::<ClassifierKind>().unwrap(), ClassifierKind::RidgeOva);
        assert!("knn".parse::<ClassifierKind>().is_err());
    }
}
