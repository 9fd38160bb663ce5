//! On-disk formats: the front file (JSON and CSV), stored networks and
//! JSON-lines traces.

use std::fmt::Write as _;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esn::{build_network, EsnConfig, EsnNetwork};
use crate::linalg::Mat;
use crate::mopso::ParetoArchive;
use crate::pso_weights::{self, WeightGenome};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontEntry {
    pub genome: Vec<f64>,
    pub objectives_pre: Vec<f64>,
    pub objectives_post: Option<Vec<f64>>,
    pub ca: Option<f64>,
}

impl FrontEntry {
    /// Post-refinement objectives when known, otherwise the level-1 ones.
    pub fn objectives(&self) -> &[f64] {
        self.objectives_post.as_deref().unwrap_or(&self.objectives_pre)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontFile {
    pub schema_version: u32,
    pub config_digest: String,
    /// Seed of the run that produced the front.
    pub seed: u64,
    pub entries: Vec<FrontEntry>,
}

impl FrontFile {
    pub fn from_archive(archive: &ParetoArchive<EsnConfig>, config_digest: &str, seed: u64) -> Self {
        FrontFile {
            schema_version: SCHEMA_VERSION,
            config_digest: config_digest.to_string(),
            seed,
            entries: archive
                .entries()
                .iter()
                .map(|e| FrontEntry {
                    genome: e.position.clone(),
                    objectives_pre: e.objectives.clone(),
                    objectives_post: None,
                    ca: None,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        to_json_text(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: FrontFile = serde_json::from_str(text)?;
        if f.schema_version != SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "front schema version {} (supported: {SCHEMA_VERSION})",
                f.schema_version
            )));
        }
        Ok(f)
    }

    /// One row per entry: `g` genome values, `m` objectives
    /// (post-refinement when known), accuracy (empty when unknown).
    pub fn to_csv(&self, g: usize, m: usize) -> String {
        let mut header: Vec<String> = (0..g).map(|i| format!("g{i}")).collect();
        header.extend((0..m).map(|i| format!("f{i}")));
        header.push("ca".into());
        let mut s = header.join(",");
        s.push('\n');
        for e in &self.entries {
            let mut cells: Vec<String> = e.genome.iter().chain(e.objectives()).map(|v| v.to_string()).collect();
            cells.push(e.ca.map(|v| v.to_string()).unwrap_or_default());
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    /// Parse rows written by [`FrontFile::to_csv`] given the genome length.
    pub fn entries_from_csv(text: &str, genome_len: usize) -> Result<Vec<FrontEntry>> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Empty("front CSV without header"))?;
        let width = header.split(',').count();
        if width < genome_len + 1 {
            return Err(Error::Data(format!("front CSV has {width} columns for genome length {genome_len}")));
        }
        let parse = |line: usize, c: &str| {
            c.parse::<f64>().map_err(|_| Error::Parse {
                path: "front.csv".into(),
                line,
                message: format!("non-numeric cell `{c}`"),
            })
        };
        lines
            .enumerate()
            .filter(|(_, l)| !l.is_empty())
            .map(|(i, l)| {
                let cells: Vec<&str> = l.split(',').collect();
                if cells.len() != width {
                    return Err(Error::Parse {
                        path: "front.csv".into(),
                        line: i + 2,
                        message: format!("{} cells, header has {width}", cells.len()),
                    });
                }
                let nums = cells[..width - 1]
                    .iter()
                    .map(|c| parse(i + 2, c))
                    .collect::<Result<Vec<_>>>()?;
                let ca = match cells[width - 1] {
                    "" => None,
                    c => Some(parse(i + 2, c)?),
                };
                Ok(FrontEntry {
                    genome: nums[..genome_len].to_vec(),
                    objectives_pre: nums[genome_len..].to_vec(),
                    objectives_post: None,
                    ca,
                })
            })
            .collect()
    }
}

/// Everything needed to rebuild a network bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredNetwork {
    pub config: EsnConfig,
    pub weights: WeightGenome,
    pub gains: Vec<f64>,
    /// Row-major `output_dim x last_layer_size`.
    pub readout: Option<Vec<f64>>,
}

impl StoredNetwork {
    pub fn from_network(net: &EsnNetwork) -> Self {
        StoredNetwork {
            config: net.config().clone(),
            weights: pso_weights::flatten(net),
            gains: pso_weights::gains(net),
            readout: net.readout_weights().map(|w| w.as_slice().to_vec()),
        }
    }

    pub fn to_network(&self) -> Result<EsnNetwork> {
        let template = build_network(&self.config)?;
        let net = pso_weights::with_weights(&template, &self.weights, &self.gains)?;
        match &self.readout {
            Some(w) => net.with_readout(Mat::from_vec(
                self.config.output_dim,
                self.config.last_layer_size(),
                w.clone(),
            )?),
            None => Ok(net),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub schema_version: u32,
    pub config_digest: String,
    pub networks: Vec<StoredNetwork>,
}

/// Pretty JSON with a trailing newline.
pub fn to_json_text<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serialises");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json_text(value))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// One compact JSON document per line.
pub fn to_json_lines<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for item in items {
        let _ = writeln!(s, "{}", serde_json::to_string(item).expect("value serialises"));
    }
    s
}

pub fn read_json_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
