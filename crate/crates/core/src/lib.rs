//! Training-free neural architecture search over empirical neural tangent
//! kernels: gradient-based zero-cost metrics, generalization-bound scores,
//! a Bayesian-optimization search loop, tabular benchmarks, and the wide/deep
//! topology NTK identities.

pub mod bench;
pub mod bounds;
#[cfg(feature = "cli")]
pub mod cli;
pub mod error;
pub mod hnas;
pub mod linalg;
pub mod metrics;
pub mod netcore;
pub mod rng;
pub mod searchspace;
pub mod topology;

pub use error::{Error, Result};
