//! Run configuration: JSON on disk, every field defaulted except the
//! dataset.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::ClassifierParams;
use crate::error::{Error, Result};
use crate::esn::EsnConfig;
use crate::mopso::{ArchBounds, Mode, MopsoParams};
use crate::pso_weights::WeightPsoParams;
use crate::rae::Pooling;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    /// One pattern per line: class label then the sequence; comma, tab or
    /// space separated.
    UcrCsv,
    /// Comma separated: optional id column, features, class label last;
    /// `?` marks a missing value.
    UciCsv,
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataFormat::UcrCsv => "ucr_csv",
            DataFormat::UciCsv => "uci_csv",
        })
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ucr_csv" | "ucr" => Ok(DataFormat::UcrCsv),
            "uci_csv" | "uci" => Ok(DataFormat::UciCsv),
            other => Err(Error::Config(format!("unknown data format `{other}`"))),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_train_fraction() -> f64 {
    0.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub format: DataFormat,
    pub train: PathBuf,
    /// Separate test file; without one the training file is split.
    #[serde(default)]
    pub test: Option<PathBuf>,
    /// Split: the first `train_rows` rows train, the rest test.
    #[serde(default)]
    pub train_rows: Option<usize>,
    /// Split when `train_rows` is absent.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// UCI files only: the first column is a record id.
    #[serde(default = "default_true")]
    pub id_column: bool,
}

/// Built-in dataset names accepted in place of a path.
pub const PRESETS: [&str; 4] = ["coffee", "ecg200", "ecgfivedays", "breast_cancer"];

impl DatasetSpec {
    fn ucr(name: &str, dir: &Path, stem: &str) -> Self {
        DatasetSpec {
            name: name.into(),
            format: DataFormat::UcrCsv,
            train: dir.join(format!("{stem}_TRAIN.tsv")),
            test: Some(dir.join(format!("{stem}_TEST.tsv"))),
            train_rows: None,
            train_fraction: default_train_fraction(),
            id_column: true,
        }
    }

    pub fn preset(name: &str, data_dir: &Path) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "coffee" => Some(Self::ucr("coffee", data_dir, "Coffee")),
            "ecg200" => Some(Self::ucr("ecg200", data_dir, "ECG200")),
            "ecgfivedays" => Some(Self::ucr("ecgfivedays", data_dir, "ECGFiveDays")),
            "breast_cancer" | "breast-cancer" => Some(DatasetSpec {
                name: "breast_cancer".into(),
                format: DataFormat::UciCsv,
                train: data_dir.join("breast-cancer-wisconsin.data"),
                test: None,
                // last 199 records held out
                train_rows: Some(500),
                train_fraction: default_train_fraction(),
                id_column: true,
            }),
            _ => None,
        }
    }

    /// A preset name, a `*_TRAIN*` file with a `*_TEST*` sibling, or a
    /// single file to be split (`.data` files are read as UCI).
    pub fn resolve(arg: &str, data_dir: &Path) -> Result<Self> {
        if let Some(p) = Self::preset(arg, data_dir) {
            return Ok(p);
        }
        let path = PathBuf::from(arg);
        let file = path
            .file_name()
            .and_then(|f| f.to_str())
            .ok_or_else(|| Error::Config(format!("`{arg}` is neither a preset nor a file path")))?
            .to_string();
        let stem = path
            .file_stem()
            .and_then(|f| f.to_str())
            .unwrap_or(&file)
            .to_string();
        let format = if path.extension().is_some_and(|e| e == "data") {
            DataFormat::UciCsv
        } else {
            DataFormat::UcrCsv
        };
        let test = file
            .contains("_TRAIN")
            .then(|| path.with_file_name(file.replacen("_TRAIN", "_TEST", 1)));
        Ok(DatasetSpec {
            name: stem.replacen("_TRAIN", "", 1).to_ascii_lowercase(),
            format,
            train: path,
            test,
            train_rows: None,
            train_fraction: default_train_fraction(),
            id_column: true,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for p in std::iter::once(&self.train).chain(self.test.iter()) {
            if !p.is_file() {
                return Err(Error::Config(format!("dataset file {} does not exist", p.display())));
            }
        }
        if self.test.is_none() && self.train_rows.is_none() && !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train fraction {} must lie strictly between 0 and 1",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

fn default_radius() -> f64 {
    0.9
}
fn default_lambda() -> f64 {
    1e-6
}
fn default_layers() -> usize {
    2
}
fn default_max_size() -> usize {
    500
}

/// Reservoir settings shared by every evaluated architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsnSettings {
    #[serde(default = "default_layers")]
    pub layers: usize,
    /// Largest admissible size of every reservoir.
    #[serde(default = "default_max_size")]
    pub max_size: usize,
    #[serde(default = "default_radius")]
    pub spectral_radius_target: f64,
    #[serde(default = "default_lambda")]
    pub ridge_lambda: f64,
    #[serde(default)]
    pub washout: usize,
}

impl Default for EsnSettings {
    fn default() -> Self {
        EsnSettings {
            layers: default_layers(),
            max_size: default_max_size(),
            spectral_radius_target: default_radius(),
            ridge_lambda: default_lambda(),
            washout: 0,
        }
    }
}

impl EsnSettings {
    /// Configuration carrying every non-genome field.
    pub fn template(&self, input_dim: usize) -> EsnConfig {
        EsnConfig {
            spectral_radius_target: self.spectral_radius_target,
            ridge_lambda: self.ridge_lambda,
            washout: self.washout,
            input_dim,
            output_dim: input_dim,
            ..EsnConfig::basic(1, 1.0, 0)
        }
    }
}

fn default_baseline_size() -> usize {
    100
}
fn default_baseline_conn() -> f64 {
    0.1
}
fn default_one() -> f64 {
    1.0
}

/// Hand-set reservoirs the evolved ones are compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSettings {
    #[serde(default = "default_baseline_size")]
    pub size: usize,
    #[serde(default = "default_baseline_conn")]
    pub connectivity: f64,
    #[serde(default = "default_baseline_conn")]
    pub inter_connectivity: f64,
    #[serde(default = "default_one")]
    pub input_connectivity: f64,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        BaselineSettings {
            size: default_baseline_size(),
            connectivity: default_baseline_conn(),
            inter_connectivity: default_baseline_conn(),
            input_connectivity: default_one(),
        }
    }
}

fn default_runs() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub esn: EsnSettings,
    /// Overrides the bounds implied by `esn.layers` and `esn.max_size`.
    #[serde(default)]
    pub bounds: Option<ArchBounds>,
    #[serde(default)]
    pub mopso: MopsoParams,
    #[serde(default)]
    pub pso: WeightPsoParams,
    #[serde(default)]
    pub pooling: Pooling,
    /// Further poolings whose accuracy is reported next to `pooling`.
    #[serde(default)]
    pub compare_poolings: Vec<Pooling>,
    #[serde(default)]
    pub classifier: ClassifierParams,
    #[serde(default)]
    pub noise_snr_db: Option<f64>,
    #[serde(default = "default_runs")]
    pub num_runs: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub baseline: BaselineSettings,
}

impl RunConfig {
    pub fn new(dataset: DatasetSpec) -> Self {
        RunConfig {
            dataset,
            mode: Mode::default(),
            esn: EsnSettings::default(),
            bounds: None,
            mopso: MopsoParams::default(),
            pso: WeightPsoParams::default(),
            pooling: Pooling::default(),
            compare_poolings: Vec::new(),
            classifier: ClassifierParams::default(),
            noise_snr_db: None,
            num_runs: default_runs(),
            master_seed: 0,
            baseline: BaselineSettings::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn arch_bounds(&self) -> ArchBounds {
        self.bounds
            .clone()
            .unwrap_or_else(|| ArchBounds::uniform(self.esn.layers, self.esn.max_size))
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        if self.num_runs == 0 {
            return Err(Error::Config("at least one run is required".into()));
        }
        if self.esn.layers == 0 || self.esn.max_size == 0 {
            return Err(Error::Config("reservoir count and maximum size must be positive".into()));
        }
        if !(self.esn.spectral_radius_target > 0.0) || !(self.esn.ridge_lambda >= 0.0) {
            return Err(Error::Config(
                "spectral radius target must be positive and ridge lambda non-negative".into(),
            ));
        }
        if let Some(snr) = self.noise_snr_db {
            if !snr.is_finite() {
                return Err(Error::Config("noise SNR must be finite".into()));
            }
        }
        self.arch_bounds().validate()?;
        self.mopso.validate()?;
        self.pso.validate()
    }

    /// SHA-256 of the serialised configuration.
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("configuration serialises");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Every pooling to evaluate, the primary one first.
    pub fn poolings(&self) -> Vec<Pooling> {
        let mut v = vec![self.pooling];
        for p in &self.compare_poolings {
            if !v.contains(p) {
                v.push(*p);
            }
        }
        v
    }
}
