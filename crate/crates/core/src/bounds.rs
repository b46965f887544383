//! Generalization-bound scores, the hybrid search objective, and closed forms
//! for gradient descent on the linearized network.
//!
//! Every score here is lower-is-better.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{jacobi, Matrix};
use crate::metrics::NtkSummary;

/// Parameters of the two-term non-realizable score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub eta: f64,
    pub c: f64,
    pub t: u32,
    pub m: usize,
}

impl BoundParams {
    pub fn new(eta: f64, c: f64, t: u32, m: usize) -> Result<Self> {
        let p = Self { eta, c, t, m };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!("c must be positive, got {}", self.c)));
        }
        if self.t == 0 || self.m == 0 {
            return Err(Error::invalid("t and m must be at least 1"));
        }
        Ok(())
    }

    /// `η / (m c)`, the only combination the first term depends on.
    pub fn rate(&self) -> f64 {
        self.eta / (self.m as f64 * self.c)
    }
}

/// Weights of the penalty term in the search objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParams {
    pub mu: f64,
    pub nu: f64,
    pub t: u32,
}

impl ObjectiveParams {
    pub fn new(mu: f64, nu: f64) -> Result<Self> {
        let p = Self { mu, nu, t: 1 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) || !self.nu.is_finite() {
            return Err(Error::invalid(format!(
                "need mu >= 0 and finite nu, got mu = {}, nu = {}",
                self.mu, self.nu
            )));
        }
        if self.t == 0 {
            return Err(Error::invalid("t must be at least 1"));
        }
        Ok(())
    }
}

fn check_metric(m: f64) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::invalid(format!("metric must be positive and finite, got {m}")));
    }
    Ok(())
}

/// `1 / M`.
pub fn realizable_score(metric: f64) -> Result<f64> {
    check_metric(metric)?;
    Ok(1.0 / metric)
}

/// `(m/2)(1 − ηM²/(mc))^{2t} + κ/M`.
pub fn nonrealizable_score(metric: f64, kappa: f64, params: &BoundParams) -> Result<f64> {
    check_metric(metric)?;
    params.validate()?;
    let base = 1.0 - params.rate() * metric * metric;
    let first = 0.5 * params.m as f64 * base.powi(2 * params.t as i32);
    Ok(first + kappa / metric)
}

/// `κ/M + μ(M² − ν)^{2t}`.
pub fn hnas_objective(metric: f64, kappa: f64, params: &ObjectiveParams) -> Result<f64> {
    check_metric(metric)?;
    params.validate()?;
    let gap = kappa / metric;
    if params.mu == 0.0 {
        return Ok(gap);
    }
    let dev = metric * metric - params.nu;
    Ok(gap + params.mu * dev.powi(2 * params.t as i32))
}

/// `(I − (η/m)Θ₀)ᵗ ŷ` by repeated multiplication.
pub fn linearized_residual(ntk: &NtkSummary, resid0: &[f64], eta: f64, t: usize) -> Result<Vec<f64>> {
    let m = ntk.size();
    if resid0.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: resid0.len(),
        });
    }
    let limit = m as f64 / ntk.lambda_max;
    if !(eta > 0.0 && eta < limit) {
        return Err(Error::invalid(format!(
            "learning rate {eta} outside (0, m/λ_max = {limit})"
        )));
    }
    let step = eta / m as f64;
    let mut r = resid0.to_vec();
    for _ in 0..t {
        let kr = ntk.matrix.mat_vec(&r)?;
        for (ri, ki) in r.iter_mut().zip(kr) {
            *ri -= step * ki;
        }
    }
    Ok(r)
}

/// `(m/2)(1 − ηM²/m)^{2t}`.
pub fn linearized_loss_bound(trace_metric: f64, eta: f64, m: usize, t: u32) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("m must be at least 1"));
    }
    let q = eta * trace_metric * trace_metric / m as f64;
    if !(q > 0.0 && q < 2.0) {
        return Err(Error::invalid(format!(
            "ηM²/m = {q} must lie strictly between 0 and 2"
        )));
    }
    Ok(0.5 * m as f64 * (1.0 - q).powi(2 * t as i32))
}

/// `√(ŷᵀΘ₀⁻¹ŷ)` through the eigendecomposition of Θ₀.
pub fn param_drift_bound(ntk: &NtkSummary, resid0: &[f64]) -> Result<f64> {
    drift_bound_of(&ntk.matrix, resid0)
}

pub(crate) fn drift_bound_of(matrix: &Matrix, resid0: &[f64]) -> Result<f64> {
    if resid0.len() != matrix.rows() {
        return Err(Error::DimensionMismatch {
            expected: matrix.rows(),
            got: resid0.len(),
        });
    }
    let eig = jacobi(matrix)?;
    let top = eig.values.last().copied().unwrap_or(0.0);
    if !(eig.values[0] > 0.0) || eig.values[0] <= 1e-14 * top {
        return Err(Error::Singular(format!(
            "Θ₀ is singular (λ_min = {:e})",
            eig.values[0]
        )));
    }
    let mut total = 0.0;
    for (k, &lambda) in eig.values.iter().enumerate() {
        let proj: f64 = (0..matrix.rows()).map(|i| eig.vectors[(i, k)] * resid0[i]).sum();
        total += proj * proj / lambda;
    }
    Ok(total.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(m: Matrix) -> NtkSummary {
        NtkSummary::from_matrix(m).unwrap()
    }

    #[test]
    fn realizable_is_reciprocal() {
        assert_eq!(realizable_score(1.0).unwrap(), 1.0);
        assert_eq!(realizable_score(2.0).unwrap(), 0.5);
        assert!(realizable_score(0.0).is_err());
        assert!(realizable_score(-1.0).is_err());
    }

    #[test]
    fn nonrealizable_substitution() {
        let p = BoundParams::new(1.0, 1.0, 1, 2).unwrap();
        assert!((nonrealizable_score(1.0, 1.0, &p).unwrap() - 1.25).abs() < 1e-15);
        assert!(nonrealizable_score(0.0, 1.0, &p).is_err());
    }

    #[test]
    fn nonrealizable_tends_to_gap_for_large_t() {
        let p = BoundParams::new(0.1, 1.0, 2000, 4).unwrap();
        let s = nonrealizable_score(3.0, 5.0, &p).unwrap();
        assert!((s - 5.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn nonrealizable_decreases_below_threshold() {
        let p = BoundParams::new(0.1, 1.0, 1, 32).unwrap();
        let edge = (p.m as f64 * p.c / p.eta).sqrt();
        let scores: Vec<f64> = (1..=400)
            .map(|i| nonrealizable_score(edge * i as f64 / 400.0, 3.0, &p).unwrap())
            .collect();
        assert!(scores.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn objective_substitution() {
        let p = ObjectiveParams::new(0.1, 0.5).unwrap();
        assert!((hnas_objective(1.0, 2.0, &p).unwrap() - 2.025).abs() < 1e-15);
        let zero_mu = ObjectiveParams::new(0.0, 7.0).unwrap();
        assert_eq!(hnas_objective(2.0, 3.0, &zero_mu).unwrap(), 1.5);
        let matched = ObjectiveParams::new(5.0, 4.0).unwrap();
        assert_eq!(hnas_objective(2.0, 3.0, &matched).unwrap(), 1.5);
        assert!(ObjectiveParams::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn residual_contracts_by_half() {
        let ntk = summary(Matrix::identity(2));
        assert_eq!(linearized_residual(&ntk, &[1.0, 1.0], 1.0, 0).unwrap(), vec![1.0, 1.0]);
        assert_eq!(linearized_residual(&ntk, &[1.0, 1.0], 1.0, 2).unwrap(), vec![0.25, 0.25]);
        assert!(linearized_residual(&ntk, &[1.0, 1.0], 2.0, 1).is_err());
    }

    #[test]
    fn loss_bound_values() {
        assert!((linearized_loss_bound(1.0, 1.0, 2, 1).unwrap() - 0.25).abs() < 1e-15);
        assert!(linearized_loss_bound(2f64.sqrt(), 1.0, 2, 3).unwrap() < 1e-80);
        assert!(linearized_loss_bound(2.0, 1.0, 2, 1).is_err());
        assert!(linearized_loss_bound(0.0, 1.0, 2, 1).is_err());
    }

    #[test]
    fn drift_bound_values() {
        let b = param_drift_bound(&summary(Matrix::identity(2)), &[1.0, 1.0]).unwrap();
        assert!((b - 2f64.sqrt()).abs() < 1e-14);
        let d = summary(Matrix::from_diagonal(&[4.0, 1.0]));
        assert!((param_drift_bound(&d, &[2.0, 1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        let singular = summary(Matrix::from_diagonal(&[1.0, 0.0]));
        assert!(matches!(param_drift_bound(&singular, &[1.0, 1.0]), Err(Error::Singular(_))));
    }

    #[test]
    fn tradeoff_has_interior_minimum() {
        for kappa in [10.0, 30.0, 100.0, 1000.0] {
            let p = BoundParams::new(0.1, 1.0, 1, 32).unwrap();
            let right = 3.0 * (p.m as f64 * p.c / p.eta).sqrt();
            let n = 600;
            let scores: Vec<f64> = (1..=n)
                .map(|i| nonrealizable_score(right * i as f64 / n as f64, kappa, &p).unwrap())
                .collect();
            let argmin = scores
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert!(argmin > 0 && argmin < n - 1, "kappa {kappa}: argmin {argmin}");
        }
    }
}
