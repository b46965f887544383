//! NTKs of the two linear topologies: the wide net `1ᵀ Σᵢ Wⁱ x`, whose kernel
//! on orthonormal inputs is exactly `L·n·I`, and the deep net `1ᵀ Wᴸ⋯W¹ x`,
//! whose kernel is `L·nᴸ·I` only in expectation over initializations.

use std::io::Write;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, mean_std, pairwise_sum, Matrix};
use crate::metrics::NtkSummary;
use crate::netcore::{output_gradients, Architecture, Dataset, InitScheme, ModelInstance};
use crate::rng;

/// Allowed deviation of `XᵀX` from the identity.
pub const ORTHONORMAL_TOL: f64 = 1e-10;
/// A column is dependent when projection leaves less than this fraction of it.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub n: usize,
    pub layers: usize,
    pub m: usize,
    pub seed: u64,
}

impl TopologySpec {
    pub fn new(n: usize, layers: usize, m: usize, seed: u64) -> Result<Self> {
        let s = Self { n, layers, m, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.layers < 1 || self.m < 1 {
            return Err(Error::invalid("need n >= 2, L >= 1 and m >= 1"));
        }
        if self.m > self.n {
            return Err(Error::invalid(format!(
                "m = {} samples cannot be orthonormal in dimension {}",
                self.m, self.n
            )));
        }
        Ok(())
    }

    /// `L·n`, the wide kernel's diagonal.
    pub fn wide_diagonal(&self) -> f64 {
        (self.layers * self.n) as f64
    }

    /// `L·nᴸ`, the deep kernel's expected diagonal.
    pub fn deep_diagonal(&self) -> f64 {
        self.layers as f64 * (self.n as f64).powi(self.layers as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Wide,
    Deep,
}

impl Topology {
    pub fn label(self) -> &'static str {
        match self {
            Topology::Wide => "wide",
            Topology::Deep => "deep",
        }
    }

    fn arch(self, layers: usize) -> Architecture {
        match self {
            Topology::Wide => Architecture::WideLinear { layers },
            Topology::Deep => Architecture::DeepLinear { layers },
        }
    }
}

/// Centers each column (over its coordinates) and applies modified
/// Gram–Schmidt. `x` is `n₀ × m` with samples as columns.
pub fn orthonormalize(x: &Matrix) -> Result<Matrix> {
    let (n0, m) = (x.rows(), x.cols());
    if m > n0 {
        return Err(Error::invalid(format!(
            "{m} columns cannot be orthonormal in dimension {n0}"
        )));
    }
    let mut cols: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let c = x.column(j);
            let mean = c.iter().sum::<f64>() / n0 as f64;
            c.into_iter().map(|v| v - mean).collect()
        })
        .collect();
    for j in 0..m {
        let original = dot(&cols[j], &cols[j]).sqrt();
        for k in 0..j {
            let (done, rest) = cols.split_at_mut(j);
            let proj = dot(&done[k], &rest[0]);
            for (v, q) in rest[0].iter_mut().zip(&done[k]) {
                *v -= proj * q;
            }
        }
        let len = dot(&cols[j], &cols[j]).sqrt();
        if !(len > RANK_TOL * original) || original == 0.0 {
            return Err(Error::RankDeficient { column: j });
        }
        for v in cols[j].iter_mut() {
            *v /= len;
        }
    }
    let mut out = Matrix::zeros(n0, m);
    for (j, c) in cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    Ok(out)
}

/// Seeded Gaussian `n × m` inputs, orthonormalized.
pub fn random_inputs(spec: &TopologySpec) -> Result<Matrix> {
    spec.validate()?;
    let mut rng = rng::derived_rng(spec.seed, "topology-inputs");
    let data = (0..spec.n * spec.m).map(|_| StandardNormal.sample(&mut rng)).collect();
    orthonormalize(&Matrix::from_row_major(spec.n, spec.m, data)?)
}

fn check_inputs(spec: &TopologySpec, x: &Matrix) -> Result<()> {
    spec.validate()?;
    if x.rows() != spec.n || x.cols() != spec.m {
        return Err(Error::DimensionMismatch {
            expected: spec.n * spec.m,
            got: x.rows() * x.cols(),
        });
    }
    let gram = x.transpose().matmul(x)?;
    let dev = gram.max_abs_diff(&Matrix::identity(spec.m));
    if dev > ORTHONORMAL_TOL {
        return Err(Error::invalid(format!("inputs are not orthonormal (‖XᵀX − I‖∞ = {dev:e})")));
    }
    Ok(())
}

fn as_dataset(x: &Matrix) -> Result<Dataset> {
    let rows = (0..x.cols()).map(|j| x.column(j)).collect();
    Dataset::new("topology", rows, vec![0.0; x.cols()])
}

/// Both linear topologies as ordinary networks, weights drawn from `seed`.
pub fn topology_model(topology: Topology, spec: &TopologySpec, seed: u64) -> Result<ModelInstance> {
    ModelInstance::init(topology.arch(spec.layers), spec.n, spec.n, InitScheme::Lecun, seed)
}

/// Wide kernel from per-sample backprop gradients.
pub fn wide_ntk(spec: &TopologySpec, x: &Matrix) -> Result<NtkSummary> {
    check_inputs(spec, x)?;
    let model = topology_model(Topology::Wide, spec, spec.seed)?;
    NtkSummary::from_gradients(&output_gradients(&model, &as_dataset(x)?)?.grads)
}

/// Deep kernel from the closed-form layer gradients: the gradient with respect
/// to row `j` of layer `i` is `(1ᵀWᴸ⋯Wⁱ⁺¹)ⱼ · Wⁱ⁻¹⋯W¹x`.
pub fn deep_kernel(weights: &[f64], n: usize, layers: usize, x: &Matrix) -> Result<Matrix> {
    if weights.len() != layers * n * n {
        return Err(Error::DimensionMismatch {
            expected: layers * n * n,
            got: weights.len(),
        });
    }
    let layer = |l: usize| &weights[l * n * n..(l + 1) * n * n];
    // back[i] = 1ᵀ W^L ⋯ W^{i+2}, i.e. the row vector multiplying layer i's output.
    let mut back = vec![vec![1.0; n]; layers];
    for l in (0..layers.saturating_sub(1)).rev() {
        let w = layer(l + 1);
        back[l] = (0..n).map(|c| (0..n).map(|r| back[l + 1][r] * w[r * n + c]).sum()).collect();
    }
    let m = x.cols();
    // fwd[s][i] = W^i ⋯ W^1 x_s (layer i's input for i = 0..L-1).
    let fwd: Vec<Vec<Vec<f64>>> = (0..m)
        .map(|s| {
            let mut h = x.column(s);
            let mut acts = Vec::with_capacity(layers);
            for l in 0..layers {
                let w = layer(l);
                let next = (0..n).map(|r| dot(&w[r * n..(r + 1) * n], &h)).collect();
                acts.push(std::mem::replace(&mut h, next));
            }
            acts
        })
        .collect();
    let mut k = Matrix::zeros(m, m);
    for a in 0..m {
        for b in 0..=a {
            let v: f64 = (0..layers)
                .map(|l| dot(&back[l], &back[l]) * dot(&fwd[a][l], &fwd[b][l]))
                .sum();
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    Ok(k)
}

pub fn deep_ntk(spec: &TopologySpec, x: &Matrix) -> Result<NtkSummary> {
    check_inputs(spec, x)?;
    deep_ntk_seeded(spec, x, spec.seed)
}

fn deep_ntk_seeded(spec: &TopologySpec, x: &Matrix, seed: u64) -> Result<NtkSummary> {
    let model = topology_model(Topology::Deep, spec, seed)?;
    NtkSummary::from_matrix(deep_kernel(model.params(), spec.n, spec.layers, x)?)
}

fn trial_seed(spec: &TopologySpec, trial: usize) -> u64 {
    rng::derive_seed(spec.seed, &format!("topology-trial-{trial}"))
}

fn run_trials<T, F>(trials: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..trials).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..trials).map(f).collect()
    }
}

/// Entrywise mean and standard error of the deep kernel over independent
/// initializations, plus each trial's κ and M_trace.
#[derive(Debug, Clone)]
pub struct DeepExpectation {
    pub mean: Matrix,
    pub std_error: Matrix,
    pub kappas: Vec<f64>,
    pub trace_metrics: Vec<f64>,
}

impl DeepExpectation {
    /// Largest relative deviation of the diagonal from `L·nᴸ`.
    pub fn diagonal_error(&self, spec: &TopologySpec) -> f64 {
        let target = spec.deep_diagonal();
        self.mean
            .diagonal()
            .iter()
            .map(|d| (d - target).abs() / target)
            .fold(0.0, f64::max)
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let m = self.mean.rows();
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    worst = worst.max(self.mean[(i, j)].abs());
                }
            }
        }
        worst
    }
}

pub fn deep_expectation(spec: &TopologySpec, x: &Matrix, trials: usize) -> Result<DeepExpectation> {
    check_inputs(spec, x)?;
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let kernels = run_trials(trials, |t| deep_ntk_seeded(spec, x, trial_seed(spec, t)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let m = spec.m;
    let mut mean = Matrix::zeros(m, m);
    let mut std_error = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let vals: Vec<f64> = kernels.iter().map(|k| k.matrix[(i, j)]).collect();
            let mu = pairwise_sum(&vals) / trials as f64;
            let sq: Vec<f64> = vals.iter().map(|v| (v - mu).powi(2)).collect();
            mean[(i, j)] = mu;
            std_error[(i, j)] = (pairwise_sum(&sq) / trials as f64).sqrt() / (trials as f64).sqrt();
        }
    }
    Ok(DeepExpectation {
        mean,
        std_error,
        kappas: kernels.iter().map(|k| k.kappa).collect(),
        trace_metrics: kernels.iter().map(|k| (k.trace / m as f64).sqrt()).collect(),
    })
}

/// Largest relative deviation of the wide kernel from `L·n·I` over seeds
/// `seed..seed + seeds`, together with the largest `|κ − 1|`.
pub fn verify_wide(n: usize, layers: usize, m: usize, seed: u64, seeds: usize) -> Result<(f64, f64)> {
    let mut worst = (0.0f64, 0.0f64);
    for s in 0..seeds as u64 {
        let spec = TopologySpec::new(n, layers, m, seed.wrapping_add(s))?;
        let x = random_inputs(&spec)?;
        let ntk = wide_ntk(&spec, &x)?;
        let target = Matrix::identity(m).scale(spec.wide_diagonal());
        let rel = ntk.matrix.max_abs_diff(&target) / spec.wide_diagonal();
        worst = (worst.0.max(rel), worst.1.max((ntk.kappa - 1.0).abs()));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyRow {
    pub topology: Topology,
    pub n: usize,
    #[serde(rename = "L")]
    pub layers: usize,
    pub m: usize,
    pub trials: usize,
    pub trace_metric_mean: f64,
    pub trace_metric_std: f64,
    pub kappa_mean: f64,
    pub kappa_std: f64,
}

/// Mean and standard deviation of M_trace and κ over `trials` initializations,
/// for both topologies on the same inputs.
pub fn topology_report(specs: &[TopologySpec], trials: usize) -> Result<Vec<TopologyRow>> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let mut rows = Vec::with_capacity(2 * specs.len());
    for spec in specs {
        let x = random_inputs(spec)?;
        let data = as_dataset(&x)?;
        for topology in [Topology::Wide, Topology::Deep] {
            let kernels = run_trials(trials, |t| -> Result<NtkSummary> {
                let seed = trial_seed(spec, t);
                match topology {
                    Topology::Wide => {
                        let model = topology_model(topology, spec, seed)?;
                        NtkSummary::from_gradients(&output_gradients(&model, &data)?.grads)
                    }
                    Topology::Deep => deep_ntk_seeded(spec, &x, seed),
                }
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let traces: Vec<f64> = kernels.iter().map(|k| (k.trace / spec.m as f64).sqrt()).collect();
            let kappas: Vec<f64> = kernels.iter().map(|k| k.kappa).collect();
            let (trace_metric_mean, trace_metric_std) = mean_std(&traces);
            let (kappa_mean, kappa_std) = mean_std(&kappas);
            rows.push(TopologyRow {
                topology,
                n: spec.n,
                layers: spec.layers,
                m: spec.m,
                trials,
                trace_metric_mean,
                trace_metric_std,
                kappa_mean,
                kappa_std,
            });
        }
    }
    Ok(rows)
}

pub fn write_topology_csv<W: Write>(rows: &[TopologyRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "topology",
        "n",
        "L",
        "m",
        "trials",
        "trace_metric_mean",
        "trace_metric_std",
        "kappa_mean",
        "kappa_std",
    ])?;
    for r in rows {
        out.write_record([
            r.topology.label().to_string(),
            r.n.to_string(),
            r.layers.to_string(),
            r.m.to_string(),
            r.trials.to_string(),
            r.trace_metric_mean.to_string(),
            r.trace_metric_std.to_string(),
            r.kappa_mean.to_string(),
            r.kappa_std.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
