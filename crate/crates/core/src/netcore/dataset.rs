use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::norm;

/// Slack allowed on `‖x‖₂ ≤ 1` and `y ∈ [0, 1]` for data that was normalized
/// in floating point.
const CONTRACT_SLACK: f64 = 1e-12;

/// How raw CSV values were mapped onto the dataset contract.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// Inputs were divided by this (the largest raw input norm).
    pub input_scale: f64,
    pub label_min: f64,
    pub label_max: f64,
}

/// `m` samples with inputs in the unit ball and labels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    inputs: Vec<Vec<f64>>,
    labels: Vec<f64>,
    pub normalization: Option<Normalization>,
}

impl Dataset {
    /// Validates the contract without altering any value.
    pub fn new(name: impl Into<String>, inputs: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if inputs.is_empty() {
            return Err(Error::invalid(format!("dataset {name} is empty")));
        }
        if inputs.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                got: labels.len(),
            });
        }
        let dim = inputs[0].len();
        if dim == 0 {
            return Err(Error::invalid("input dimension must be at least 1"));
        }
        for (i, x) in inputs.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.len(),
                });
            }
            let nx = norm(x);
            if !nx.is_finite() || nx > 1.0 + CONTRACT_SLACK {
                return Err(Error::invalid(format!(
                    "input {i} of {name} has norm {nx}, outside the unit ball"
                )));
            }
        }
        for (i, &y) in labels.iter().enumerate() {
            if !(-CONTRACT_SLACK..=1.0 + CONTRACT_SLACK).contains(&y) {
                return Err(Error::invalid(format!(
                    "label {i} of {name} is {y}, outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            name,
            inputs,
            labels,
            normalization: None,
        })
    }

    /// Rescales inputs so the largest norm is 1 and min-max maps labels onto
    /// `[0, 1]`. Constant labels map to 0.
    pub fn normalized(
        name: impl Into<String>,
        mut inputs: Vec<Vec<f64>>,
        mut labels: Vec<f64>,
    ) -> Result<Self> {
        let scale = inputs.iter().map(|x| norm(x)).fold(0.0, f64::max);
        if !scale.is_finite() {
            return Err(Error::invalid("non-finite input values"));
        }
        let scale = if scale > 0.0 { scale } else { 1.0 };
        for x in inputs.iter_mut() {
            for v in x.iter_mut() {
                *v /= scale;
            }
        }
        let lo = labels.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid("non-finite label values"));
        }
        let span = hi - lo;
        for y in labels.iter_mut() {
            *y = if span > 0.0 { (*y - lo) / span } else { 0.0 };
        }
        let mut ds = Self::new(name, inputs, labels)?;
        ds.normalization = Some(Normalization {
            input_scale: scale,
            label_min: lo,
            label_max: hi,
        });
        Ok(ds)
    }

    /// Reads a CSV with header `x0,...,x{n0-1},y` and normalizes it.
    pub fn from_csv_reader<R: Read>(name: impl Into<String>, reader: R) -> Result<Self> {
        let (inputs, labels) = read_csv_columns(reader)?;
        Self::normalized(name, inputs, labels)
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        Self::from_csv_reader(name, std::fs::File::open(path)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// A copy with the labels replaced (still validated).
    pub fn with_labels(&self, labels: Vec<f64>) -> Result<Self> {
        let mut ds = Self::new(self.name.clone(), self.inputs.clone(), labels)?;
        ds.normalization = self.normalization;
        Ok(ds)
    }

    /// The samples at `indices`, in that order.
    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Result<Self> {
        let inputs = indices.iter().map(|&i| self.inputs[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let mut ds = Self::new(name, inputs, labels)?;
        ds.normalization = self.normalization;
        Ok(ds)
    }

    /// Hex SHA-256 over the little-endian bytes of every input and label.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.input_dim() as u64).to_le_bytes());
        for (x, y) in self.inputs.iter().zip(&self.labels) {
            for v in x {
                h.update(v.to_le_bytes());
            }
            h.update(y.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn read_csv_columns<R: Read>(reader: R) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let n = headers.len();
    if n < 2 {
        return Err(Error::invalid("CSV needs at least one input column and y"));
    }
    for (j, h) in headers.iter().enumerate() {
        let expected = if j + 1 == n {
            "y".to_string()
        } else {
            format!("x{j}")
        };
        if h.trim() != expected {
            return Err(Error::invalid(format!(
                "CSV header column {j} is {h:?}, expected {expected:?}"
            )));
        }
    }
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != n {
            return Err(Error::invalid(format!(
                "CSV row {} has {} fields, expected {n}",
                row + 1,
                rec.len()
            )));
        }
        let vals = rec
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    Error::invalid(format!("CSV row {}: {f:?} is not a number", row + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        labels.push(vals[n - 1]);
        inputs.push(vals[..n - 1].to_vec());
    }
    Ok((inputs, labels))
}
