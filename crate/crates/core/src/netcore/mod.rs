//! A small deterministic network engine: cell forward pass, per-sample
//! reverse-mode gradients, finite-difference Hessian-vector products, and
//! full-batch gradient descent.

mod dataset;
mod grad;
mod model;
mod train;

pub use dataset::{Dataset, Normalization};
pub use grad::{
    forward, hvp, hvp_step, loss_gradients, mean_loss, mse, output_gradients, sample_gradient,
    GradientBundle, HvpMethod, OutputGradients,
};
pub use model::{Architecture, InitScheme, ModelInstance};
pub use train::{train_gd, train_gd_calls};
