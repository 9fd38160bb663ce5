//! Dataset loading and Gaussian noise injection.

use std::collections::BTreeSet;
use std::path::Path;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rae::{Dataset, Pattern};
use crate::rng::rng_for;

use super::config::{DataFormat, DatasetSpec};

struct Row {
    label: String,
    values: Vec<Option<f64>>,
    line: usize,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Numeric labels are normalised (`1.0000e+00` and `1` are one class).
fn canonical_label(s: &str) -> String {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => format!("{v}"),
        _ => s.to_string(),
    }
}

fn parse_value(path: &Path, line: usize, cell: &str, allow_missing: bool) -> Result<Option<f64>> {
    if allow_missing && cell == "?" {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(parse_err(path, line, format!("non-numeric cell `{cell}`"))),
    }
}

fn parse_rows(path: &Path, format: DataFormat, id_column: bool) -> Result<Vec<Row>> {
    let text = read(path)?;
    let mut rows = Vec::new();
    let mut width = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields = split_fields(trimmed);
        let (label, cells) = match format {
            DataFormat::UcrCsv => (fields[0], &fields[1..]),
            DataFormat::UciCsv => {
                let start = usize::from(id_column);
                if fields.len() < start + 2 {
                    return Err(parse_err(path, line, "too few columns"));
                }
                (fields[fields.len() - 1], &fields[start..fields.len() - 1])
            }
        };
        if cells.is_empty() {
            return Err(parse_err(path, line, "row has a label but no values"));
        }
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(parse_err(
                    path,
                    line,
                    format!("ragged row: {} values, expected {w}", cells.len()),
                ))
            }
            _ => {}
        }
        let values = cells
            .iter()
            .map(|c| parse_value(path, line, c, format == DataFormat::UciCsv))
            .collect::<Result<Vec<_>>>()?;
        rows.push(Row {
            label: canonical_label(label),
            values,
            line,
        });
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

/// Class names in ascending order, numerically when every label is a
/// number.
fn class_names(rows: &[Row]) -> Vec<String> {
    let set: BTreeSet<&str> = rows.iter().map(|r| r.label.as_str()).collect();
    let mut names: Vec<String> = set.into_iter().map(String::from).collect();
    if names.iter().all(|n| n.parse::<f64>().is_ok()) {
        names.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    names
}

fn to_patterns(path: &Path, rows: &[Row], names: &[String], fill: &[f64]) -> Result<Vec<Pattern>> {
    rows.iter()
        .map(|r| {
            let label = names
                .iter()
                .position(|n| *n == r.label)
                .ok_or_else(|| parse_err(path, r.line, format!("label `{}` absent from training data", r.label)))?;
            let values = r
                .values
                .iter()
                .zip(fill)
                .map(|(v, f)| v.unwrap_or(*f))
                .collect::<Vec<_>>();
            Ok(Pattern {
                sequence: Mat::from_vec(values.len(), 1, values)?,
                label,
            })
        })
        .collect()
}

/// Per-column mean of the present training values (0 for an all-missing
/// column).
fn column_means(rows: &[Row]) -> Vec<f64> {
    let w = rows[0].values.len();
    (0..w)
        .map(|j| {
            let present: Vec<f64> = rows.iter().filter_map(|r| r.values[j]).collect();
            if present.is_empty() {
                0.0
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            }
        })
        .collect()
}

/// Read a dataset. Labels become 0-based ids in ascending label order of
/// the training split; missing UCI cells take the training column mean.
pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    let mut train = parse_rows(&spec.train, spec.format, spec.id_column)?;
    let test = match &spec.test {
        Some(p) => {
            let rows = parse_rows(p, spec.format, spec.id_column)?;
            if rows[0].values.len() != train[0].values.len() {
                return Err(Error::Data(format!(
                    "test patterns have {} values, training patterns {}",
                    rows[0].values.len(),
                    train[0].values.len()
                )));
            }
            rows
        }
        None => {
            let n = train.len();
            let cut = spec
                .train_rows
                .unwrap_or_else(|| (spec.train_fraction * n as f64).round() as usize);
            if cut == 0 || cut >= n {
                return Err(Error::Config(format!("cannot split {n} rows at {cut}")));
            }
            train.split_off(cut)
        }
    };
    let names = class_names(&train);
    let fill = column_means(&train);
    let test_path = spec.test.as_deref().unwrap_or(&spec.train);
    Dataset::new(
        spec.name.clone(),
        to_patterns(&spec.train, &train, &names, &fill)?,
        to_patterns(test_path, &test, &names, &fill)?,
        names,
    )
}

/// Mean squared value over every scalar of a split.
pub fn signal_power(split: &[Pattern]) -> f64 {
    let (sum, count) = split.iter().fold((0.0, 0usize), |(s, c), p| {
        (
            s + p.sequence.as_slice().iter().map(|v| v * v).sum::<f64>(),
            c + p.sequence.as_slice().len(),
        )
    });
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn noisy_split(split: &[Pattern], snr_db: f64, seed: u64, stream: u64) -> Result<Vec<Pattern>> {
    let variance = signal_power(split) / 10f64.powf(snr_db / 10.0);
    if variance == 0.0 {
        return Ok(split.to_vec());
    }
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::Numerical(e.to_string()))?;
    let mut rng = rng_for(seed, &[stream]);
    Ok(split
        .iter()
        .map(|p| {
            let mut q = p.clone();
            for v in q.sequence.as_mut_slice() {
                *v += normal.sample(&mut rng);
            }
            q
        })
        .collect())
}

/// Add zero-mean Gaussian noise of variance `P / 10^(snr_db / 10)` to both
/// splits, `P` being each split's own signal power; the splits use
/// independent streams.
pub fn add_noise(dataset: &Dataset, snr_db: f64, seed: u64) -> Result<Dataset> {
    if dataset.train.is_empty() && dataset.test.is_empty() {
        return Err(Error::Empty("noise on an empty dataset"));
    }
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("SNR {snr_db} dB is not finite")));
    }
    Ok(Dataset {
        train: noisy_split(&dataset.train, snr_db, seed, 0)?,
        test: noisy_split(&dataset.test, snr_db, seed, 1)?,
        ..dataset.clone()
    })
}
