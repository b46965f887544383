//! Hybrid search: pick the pool member minimizing `κ/M + μ(M² − ν)²` and tune
//! `(μ, ν)` by Gaussian-process Bayesian optimization against validation
//! scores. Random search and the plain metric argmax serve as baselines.

mod gp;
mod search;

pub use gp::{
    ei_closed_form, expected_improvement, gp_fit, gp_posterior, log_marginal_likelihood,
    normal_cdf, normal_pdf, se_kernel, standardization, GpConfig, GpState, Point,
};
pub(crate) use search::propose;
pub use search::{
    hnas_search, hnas_search_reports, random_search, select_candidate, training_free_argmax,
    Evaluator, HnasConfig, SearchBox, SearchStep, SearchTrace,
};
