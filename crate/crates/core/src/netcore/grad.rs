use serde::{Deserialize, Serialize};

use super::{Dataset, ModelInstance};
use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};

/// Per-sample outputs and output gradients: row `i` of `grads` is `∇θ f(xᵢ, θ)`.
#[derive(Debug, Clone)]
pub struct OutputGradients {
    pub outputs: Vec<f64>,
    pub grads: Matrix,
}

/// Output and loss gradients for the MSE loss `ℓ(f, y) = (f − y)²/2`.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub outputs: Vec<f64>,
    /// `f(xᵢ) − yᵢ`
    pub residuals: Vec<f64>,
    pub output_grads: Matrix,
    pub loss_grads: Matrix,
    pub mean_loss_grad: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HvpMethod {
    /// Central difference of the loss gradient along `v`.
    #[default]
    FiniteDiff,
    /// Exact `x xᵀ v`; only defined for the linear probe.
    AnalyticLinear,
}

fn check_dims(model: &ModelInstance, data: &Dataset) -> Result<()> {
    if data.input_dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: data.input_dim(),
        });
    }
    Ok(())
}

fn numeric(model: &ModelInstance, detail: impl Into<String>) -> Error {
    Error::NumericFailure {
        arch: model.id(),
        detail: detail.into(),
    }
}

pub fn forward(model: &ModelInstance, x: &[f64]) -> Result<f64> {
    model.check_input(x)?;
    Ok(model.eval_with(model.params(), x, false).0)
}

/// Output and gradient for one sample, rejecting non-finite values.
pub fn sample_gradient(model: &ModelInstance, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    model.check_input(x)?;
    gradient_at(model, model.params(), x)
}

fn gradient_at(model: &ModelInstance, params: &[f64], x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (f, g) = model.eval_with(params, x, true);
    let g = g.expect("gradient requested");
    if !f.is_finite() {
        return Err(numeric(model, "non-finite forward output"));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(numeric(model, "non-finite gradient"));
    }
    Ok((f, g))
}

/// One reverse-mode pass per sample.
pub fn output_gradients(model: &ModelInstance, data: &Dataset) -> Result<OutputGradients> {
    check_dims(model, data)?;
    let d = model.param_count();
    let mut outputs = Vec::with_capacity(data.len());
    let mut rows = Vec::with_capacity(data.len() * d);
    for x in data.inputs() {
        let (f, g) = gradient_at(model, model.params(), x)?;
        outputs.push(f);
        rows.extend_from_slice(&g);
    }
    let grads = Matrix::from_row_major(data.len(), d, rows)?;
    Ok(OutputGradients { outputs, grads })
}

pub fn loss_gradients(model: &ModelInstance, data: &Dataset) -> Result<GradientBundle> {
    let OutputGradients { outputs, grads } = output_gradients(model, data)?;
    let m = data.len();
    let d = model.param_count();
    let residuals: Vec<f64> = outputs
        .iter()
        .zip(data.labels())
        .map(|(f, y)| f - y)
        .collect();
    let mut loss_grads = Matrix::zeros(m, d);
    let mut mean_loss_grad = vec![0.0; d];
    for i in 0..m {
        let r = residuals[i];
        for (dst, &g) in loss_grads.row_mut(i).iter_mut().zip(grads.row(i)) {
            *dst = r * g;
        }
    }
    for i in 0..m {
        for (acc, &g) in mean_loss_grad.iter_mut().zip(loss_grads.row(i)) {
            *acc += g;
        }
    }
    let inv_m = 1.0 / m as f64;
    mean_loss_grad.iter_mut().for_each(|v| *v *= inv_m);
    Ok(GradientBundle {
        outputs,
        residuals,
        output_grads: grads,
        loss_grads,
        mean_loss_grad,
    })
}

/// Mean MSE loss `(1/m) Σ (f(xᵢ) − yᵢ)²/2`.
pub fn mean_loss(model: &ModelInstance, data: &Dataset) -> Result<f64> {
    check_dims(model, data)?;
    let mut total = 0.0;
    for (x, y) in data.inputs().iter().zip(data.labels()) {
        let f = model.eval_with(model.params(), x, false).0;
        total += 0.5 * (f - y) * (f - y);
    }
    let loss = total / data.len() as f64;
    if !loss.is_finite() {
        return Err(numeric(model, "non-finite loss"));
    }
    Ok(loss)
}

/// Mean squared error `(1/m) Σ (f(xᵢ) − yᵢ)²` (no ½ factor).
pub fn mse(model: &ModelInstance, data: &Dataset) -> Result<f64> {
    mean_loss(model, data).map(|l| 2.0 * l)
}

/// Finite-difference step along `v`: `1e-4 · (1 + ‖θ‖) / ‖v‖`.
pub fn hvp_step(params: &[f64], v: &[f64]) -> f64 {
    1e-4 * (1.0 + norm(params)) / norm(v)
}

/// `Hᵢ v` where `Hᵢ = ∇²θ ℓ(f(xᵢ, θ), yᵢ)`.
pub fn hvp(
    model: &ModelInstance,
    data: &Dataset,
    sample_index: usize,
    v: &[f64],
    method: HvpMethod,
) -> Result<Vec<f64>> {
    check_dims(model, data)?;
    if sample_index >= data.len() {
        return Err(Error::invalid(format!(
            "sample index {sample_index} out of range for {} samples",
            data.len()
        )));
    }
    if v.len() != model.param_count() {
        return Err(Error::DimensionMismatch {
            expected: model.param_count(),
            got: v.len(),
        });
    }
    if v.iter().all(|&x| x == 0.0) {
        return Err(Error::invalid("HVP direction must be nonzero"));
    }
    let x = data.input(sample_index);
    let y = data.label(sample_index);
    let out: Vec<f64> = match method {
        HvpMethod::AnalyticLinear => {
            if !matches!(model.arch(), super::Architecture::LinearProbe) {
                return Err(Error::invalid(
                    "analytic HVP is only defined for the linear probe",
                ));
            }
            let s = model.output_scale();
            let xv: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
            x.iter().map(|xi| s * s * xi * xv).collect()
        }
        HvpMethod::FiniteDiff => {
            let theta = model.params();
            let eps = hvp_step(theta, v);
            let shifted = |sign: f64| -> Result<Vec<f64>> {
                let p: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t + sign * eps * d).collect();
                let (f, g) = gradient_at(model, &p, x)?;
                let r = f - y;
                Ok(g.into_iter().map(|gi| r * gi).collect())
            };
            let plus = shifted(1.0)?;
            let minus = shifted(-1.0)?;
            plus.iter()
                .zip(&minus)
                .map(|(a, b)| (a - b) / (2.0 * eps))
                .collect()
        }
    };
    if out.iter().any(|v| !v.is_finite()) {
        return Err(numeric(model, "non-finite Hessian-vector product"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(n: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    #[test]
    fn probe_forward_and_gradients() {
        let m = ModelInstance::linear_probe(e(3, 0)).unwrap();
        assert_eq!(forward(&m, &e(3, 0)).unwrap(), 1.0);
        assert!(forward(&m, &[1.0, 0.0]).is_err());
        let data = Dataset::new("d", vec![e(3, 0), vec![0.0, 0.6, 0.8]], vec![0.0, 1.0]).unwrap();
        let og = output_gradients(&m, &data).unwrap();
        assert_eq!(og.grads.row(0), e(3, 0).as_slice());
        assert_eq!(og.grads.row(1), &[0.0, 0.6, 0.8]);
    }

    #[test]
    fn zero_residual_gives_zero_loss_grads() {
        let m = ModelInstance::linear_probe(vec![0.3, 0.2]).unwrap();
        let xs = vec![vec![0.5, 0.5], vec![1.0, 0.0]];
        let ys: Vec<f64> = xs.iter().map(|x| forward(&m, x).unwrap()).collect();
        let data = Dataset::new("d", xs, ys).unwrap();
        let b = loss_gradients(&m, &data).unwrap();
        assert!(b.loss_grads.as_slice().iter().all(|&v| v == 0.0));
        assert!(b.mean_loss_grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn analytic_mean_loss_grad_for_zero_probe() {
        let m = ModelInstance::linear_probe(vec![0.0; 4]).unwrap();
        let xs: Vec<Vec<f64>> = (0..4).map(|i| e(4, i)).collect();
        let data = Dataset::new("d", xs, vec![1.0; 4]).unwrap();
        let b = loss_gradients(&m, &data).unwrap();
        assert_eq!(b.mean_loss_grad, vec![-0.25; 4]);
        assert!((norm(&b.mean_loss_grad) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn probe_hvp_cases() {
        let m = ModelInstance::linear_probe(vec![0.2, -0.1, 0.4]).unwrap();
        let data = Dataset::new("d", vec![e(3, 0)], vec![0.5]).unwrap();
        for method in [HvpMethod::AnalyticLinear, HvpMethod::FiniteDiff] {
            let hv = hvp(&m, &data, 0, &e(3, 0), method).unwrap();
            assert!((hv[0] - 1.0).abs() < 1e-9 && hv[1].abs() < 1e-12 && hv[2].abs() < 1e-12);
            let hv = hvp(&m, &data, 0, &e(3, 1), method).unwrap();
            assert!(hv.iter().all(|v| v.abs() < 1e-12), "{hv:?}");
        }
        assert!(hvp(&m, &data, 0, &[0.0; 3], HvpMethod::FiniteDiff).is_err());
        assert!(hvp(&m, &data, 1, &e(3, 0), HvpMethod::FiniteDiff).is_err());
    }
}
