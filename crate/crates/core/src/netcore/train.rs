use std::sync::atomic::{AtomicUsize, Ordering};

use super::grad::{loss_gradients, mean_loss};
use super::{Dataset, ModelInstance};
use crate::error::{Error, Result};

static TRAIN_CALLS: AtomicUsize = AtomicUsize::new(0);

/// Number of `train_gd` invocations in this process.
pub fn train_gd_calls() -> usize {
    TRAIN_CALLS.load(Ordering::Relaxed)
}

/// Full-batch gradient descent on the mean MSE loss. The returned trace holds
/// the loss before each of the `steps` updates.
pub fn train_gd(
    model: &ModelInstance,
    data: &Dataset,
    lr: f64,
    steps: usize,
) -> Result<(ModelInstance, Vec<f64>)> {
    TRAIN_CALLS.fetch_add(1, Ordering::Relaxed);
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
    }
    let mut current = model.clone();
    let mut trace = Vec::with_capacity(steps);
    for step in 0..steps {
        let bundle = match loss_gradients(&current, data) {
            Ok(b) => b,
            Err(Error::NumericFailure { .. }) => {
                return Err(Error::Divergence {
                    step,
                    loss: f64::NAN,
                })
            }
            Err(e) => return Err(e),
        };
        let loss = bundle.residuals.iter().map(|r| 0.5 * r * r).sum::<f64>()
            / data.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        trace.push(loss);
        let params: Vec<f64> = current
            .params()
            .iter()
            .zip(&bundle.mean_loss_grad)
            .map(|(p, g)| p - lr * g)
            .collect();
        current = current.with_params(params)?;
    }
    if steps > 0 {
        // Surface divergence caused by the final update.
        match mean_loss(&current, data) {
            Ok(loss) if loss.is_finite() => {}
            Ok(loss) => return Err(Error::Divergence { step: steps, loss }),
            Err(Error::NumericFailure { .. }) => {
                return Err(Error::Divergence {
                    step: steps,
                    loss: f64::NAN,
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok((current, trace))
}
