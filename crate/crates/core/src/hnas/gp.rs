use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, dot, solve_lower, solve_lower_transpose, Matrix};

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    /// Candidate lengthscales; the one with the largest marginal likelihood wins.
    pub lengthscales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
    pub jitter_start: f64,
    pub jitter_max: f64,
    /// Floor on the target variance used for standardization.
    pub variance_floor: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            lengthscales: vec![0.05, 0.1, 0.2, 0.4, 0.8],
            signal_var: 1.0,
            noise_var: 1e-4,
            jitter_start: 1e-8,
            jitter_max: 1e-2,
            variance_floor: 1e-12,
        }
    }
}

/// A fitted GP over standardized targets.
#[derive(Debug, Clone)]
pub struct GpState {
    pub train_inputs: Vec<Point>,
    pub train_targets: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
    pub lengthscale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
    /// Diagonal jitter that made the factorization succeed.
    pub jitter: f64,
    pub chol: Matrix,
    alpha: Vec<f64>,
    pub log_marginal_likelihood: f64,
}

pub fn se_kernel(a: &Point, b: &Point, lengthscale: f64, signal_var: f64) -> f64 {
    let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    signal_var * (-d2 / (2.0 * lengthscale * lengthscale)).exp()
}

fn gram(points: &[Point], lengthscale: f64, signal_var: f64) -> Matrix {
    let k = points.len();
    let mut m = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let v = se_kernel(&points[i], &points[j], lengthscale, signal_var);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

struct Factor {
    chol: Matrix,
    jitter: f64,
    alpha: Vec<f64>,
    lml: f64,
}

fn factor(points: &[Point], targets: &[f64], lengthscale: f64, config: &GpConfig) -> Result<Factor> {
    let base = gram(points, lengthscale, config.signal_var);
    let k = points.len();
    let mut jitter = config.jitter_start;
    loop {
        let mut a = base.clone();
        for i in 0..k {
            a[(i, i)] += config.noise_var + jitter;
        }
        if let Some(chol) = cholesky(&a) {
            let alpha = solve_lower_transpose(&chol, &solve_lower(&chol, targets));
            let log_det_half: f64 = (0..k).map(|i| chol[(i, i)].ln()).sum();
            let lml = -0.5 * dot(targets, &alpha)
                - log_det_half
                - 0.5 * k as f64 * (2.0 * std::f64::consts::PI).ln();
            return Ok(Factor {
                chol,
                jitter,
                alpha,
                lml,
            });
        }
        if jitter >= config.jitter_max {
            return Err(Error::Cholesky { jitter });
        }
        jitter = (jitter * 10.0).min(config.jitter_max);
    }
}

/// Log marginal likelihood of standardized `targets` at one lengthscale.
pub fn log_marginal_likelihood(
    points: &[Point],
    targets: &[f64],
    lengthscale: f64,
    config: &GpConfig,
) -> Result<f64> {
    Ok(factor(points, targets, lengthscale, config)?.lml)
}

/// `(mean, std)` with the variance floored, as used for standardization.
pub fn standardization(targets: &[f64], floor: f64) -> (f64, f64) {
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    (mean, var.max(floor).sqrt())
}

pub fn gp_fit(points: &[Point], targets: &[f64], config: &GpConfig) -> Result<GpState> {
    if points.is_empty() {
        return Err(Error::invalid("GP needs at least one training point"));
    }
    if points.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: targets.len(),
        });
    }
    if points
        .iter()
        .flatten()
        .any(|u| !(0.0..=1.0).contains(u))
    {
        return Err(Error::invalid("GP inputs must lie in [0, 1]²"));
    }
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(Error::invalid("GP targets must be finite"));
    }
    let (target_mean, target_std) = standardization(targets, config.variance_floor);
    let z: Vec<f64> = targets.iter().map(|y| (y - target_mean) / target_std).collect();

    let mut best: Option<(f64, Factor)> = None;
    let mut last_err = None;
    for &ell in &config.lengthscales {
        match factor(points, &z, ell, config) {
            Ok(f) => {
                if best.as_ref().is_none_or(|(_, b)| f.lml > b.lml) {
                    best = Some((ell, f));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (lengthscale, f) = match best {
        Some(b) => b,
        None => {
            return Err(last_err.unwrap_or(Error::Cholesky {
                jitter: config.jitter_max,
            }))
        }
    };
    Ok(GpState {
        train_inputs: points.to_vec(),
        train_targets: z,
        target_mean,
        target_std,
        lengthscale,
        signal_var: config.signal_var,
        noise_var: config.noise_var,
        jitter: f.jitter,
        chol: f.chol,
        alpha: f.alpha,
        log_marginal_likelihood: f.lml,
    })
}

impl GpState {
    /// `K + (noise + jitter) I` at the chosen lengthscale.
    pub fn kernel_matrix(&self) -> Matrix {
        let mut a = gram(&self.train_inputs, self.lengthscale, self.signal_var);
        for i in 0..a.rows() {
            a[(i, i)] += self.noise_var + self.jitter;
        }
        a
    }

    /// Posterior of the latent standardized function: `(mean, variance)`.
    pub fn standardized_posterior(&self, query: &Point) -> (f64, f64) {
        let ks: Vec<f64> = self
            .train_inputs
            .iter()
            .map(|p| se_kernel(p, query, self.lengthscale, self.signal_var))
            .collect();
        let mean = dot(&ks, &self.alpha);
        let v = solve_lower(&self.chol, &ks);
        let var = (self.signal_var - dot(&v, &v)).max(0.0);
        (mean, var)
    }
}

/// Posterior `(mean, variance)` in the original target units.
pub fn gp_posterior(state: &GpState, query: &Point) -> (f64, f64) {
    let (m, v) = state.standardized_posterior(query);
    (
        state.target_mean + state.target_std * m,
        state.target_std * state.target_std * v,
    )
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement over `best` for a maximization problem.
pub fn ei_closed_form(mean: f64, sigma: f64, best: f64) -> f64 {
    let gain = mean - best;
    if sigma < 1e-12 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    (gain * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

pub fn expected_improvement(state: &GpState, query: &Point, best: f64) -> f64 {
    let (mean, var) = gp_posterior(state, query);
    ei_closed_form(mean, var.sqrt(), best)
}
