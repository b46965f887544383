use std::path::PathBuf;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::netcore::Dataset;
use crate::rng;

pub const TEACHER_HIDDEN: usize = 16;
/// Pre-activation gain of the teacher's hidden layer.
pub const TEACHER_GAIN: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetKind {
    /// Inputs uniform on the unit ball, labels from a random 2-layer tanh net.
    Teacher,
    /// A CSV file (`x0,...,y`) split deterministically.
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// The fixed random labelling function `y = aᵀ tanh(g · W x)`; depends only on
/// `(seed, n₀)`.
#[derive(Debug, Clone)]
pub struct Teacher {
    weights: Vec<Vec<f64>>,
    readout: Vec<f64>,
}

impl Teacher {
    pub fn new(n0: usize, seed: u64) -> Self {
        let mut rng = rng::derived_rng(seed, &format!("teacher-n0-{n0}"));
        let weights = (0..TEACHER_HIDDEN)
            .map(|_| (0..n0).map(|_| TEACHER_GAIN * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let scale = 1.0 / (TEACHER_HIDDEN as f64).sqrt();
        let readout = (0..TEACHER_HIDDEN)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self { weights, readout }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(&self.readout)
            .map(|(w, a)| a * dot(w, x).tanh())
            .sum()
    }
}

/// A point uniform on the unit ball of dimension `n0`.
pub fn unit_ball_point(rng: &mut rng::Rng, n0: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n0).map(|_| rng.sample(StandardNormal)).collect();
        let r = norm(&v);
        if r > 0.0 {
            let radius = rng.random::<f64>().powf(1.0 / n0 as f64);
            return v.into_iter().map(|x| x / r * radius).collect();
        }
    }
}

fn check_sizes(n0: usize, sizes: [usize; 3]) -> Result<()> {
    if n0 == 0 || sizes.contains(&0) {
        return Err(Error::invalid("input dimension and split sizes must be at least 1"));
    }
    Ok(())
}

/// Teacher splits. Labels are min-max normalized with train statistics;
/// validation and test labels are clipped to `[0, 1]`.
pub fn teacher_splits(
    n0: usize,
    m_train: usize,
    m_val: usize,
    m_test: usize,
    seed: u64,
) -> Result<Splits> {
    check_sizes(n0, [m_train, m_val, m_test])?;
    let teacher = Teacher::new(n0, seed);
    let mut rng = rng::derived_rng(seed, "teacher-inputs");
    let total = m_train + m_val + m_test;
    let inputs: Vec<Vec<f64>> = (0..total).map(|_| unit_ball_point(&mut rng, n0)).collect();
    let raw: Vec<f64> = inputs.iter().map(|x| teacher.eval(x)).collect();

    let lo = raw[..m_train].iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw[..m_train].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let labels: Vec<f64> = raw
        .iter()
        .map(|y| {
            if span > 0.0 {
                ((y - lo) / span).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();

    let norm_rec = crate::netcore::Normalization {
        input_scale: 1.0,
        label_min: lo,
        label_max: hi,
    };
    let split = |name: &str, range: std::ops::Range<usize>| -> Result<Dataset> {
        let mut ds = Dataset::new(
            format!("teacher-s{seed}-{name}"),
            inputs[range.clone()].to_vec(),
            labels[range].to_vec(),
        )?;
        ds.normalization = Some(norm_rec);
        Ok(ds)
    };
    Ok(Splits {
        train: split("train", 0..m_train)?,
        val: split("val", m_train..m_train + m_val)?,
        test: split("test", m_train + m_val..total)?,
    })
}

/// Seeded shuffle of a loaded dataset into train/val/test.
pub fn file_splits(
    data: &Dataset,
    m_train: usize,
    m_val: usize,
    m_test: usize,
    seed: u64,
) -> Result<Splits> {
    check_sizes(data.input_dim(), [m_train, m_val, m_test])?;
    let total = m_train + m_val + m_test;
    if total > data.len() {
        return Err(Error::invalid(format!(
            "{} has {} samples, {total} requested",
            data.name,
            data.len()
        )));
    }
    let mut rng = rng::derived_rng(seed, "file-split");
    let idx = rand::seq::index::sample(&mut rng, data.len(), total).into_vec();
    Ok(Splits {
        train: data.subset(format!("{}-train", data.name), &idx[..m_train])?,
        val: data.subset(format!("{}-val", data.name), &idx[m_train..m_train + m_val])?,
        test: data.subset(format!("{}-test", data.name), &idx[m_train + m_val..])?,
    })
}

pub fn make_dataset(
    kind: &DatasetKind,
    n0: usize,
    m_train: usize,
    m_val: usize,
    m_test: usize,
    seed: u64,
) -> Result<Splits> {
    match kind {
        DatasetKind::Teacher => teacher_splits(n0, m_train, m_val, m_test, seed),
        DatasetKind::File(path) => {
            let data = Dataset::from_csv(path)?;
            if data.input_dim() != n0 {
                return Err(Error::invalid(format!(
                    "{} has input dimension {}, expected {n0}",
                    path.display(),
                    data.input_dim()
                )));
            }
            file_splits(&data, m_train, m_val, m_test, seed)
        }
    }
}
