//! The empirical NTK at initialization and the four gradient-based
//! training-free metrics computed from it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, jacobi, norm, Matrix};
use crate::netcore::{
    hvp, loss_gradients, Architecture, Dataset, GradientBundle, HvpMethod, InitScheme,
    ModelInstance,
};
use crate::rng;
use crate::searchspace::{ArchPool, CellArch};

/// λ_min is floored at this fraction of λ_max when forming κ.
pub const KAPPA_FLOOR: f64 = 1e-12;
/// Allowed negative spectrum relative to λ_max before Θ₀ is declared non-PSD.
pub const PSD_TOL: f64 = 1e-8;
/// Required agreement between the two M_trace routes.
pub const TRACE_PATH_TOL: f64 = 1e-10;
pub const DEFAULT_BATCH: usize = 32;

/// `Θ₀` with its spectrum summary.
#[derive(Debug, Clone)]
pub struct NtkSummary {
    pub matrix: Matrix,
    pub trace: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    /// Set when λ_min was floored at `KAPPA_FLOOR · λ_max`.
    pub clamped: bool,
}

impl NtkSummary {
    /// Summarizes a symmetric PSD matrix.
    pub fn from_matrix(matrix: Matrix) -> Result<Self> {
        let ev = jacobi(&matrix)?.values;
        let lambda_min = ev[0];
        let lambda_max = *ev.last().expect("nonempty spectrum");
        if !(lambda_max > 0.0) {
            return Err(Error::Singular(format!(
                "NTK has no positive eigenvalue (λ_max = {lambda_max})"
            )));
        }
        if lambda_min < -PSD_TOL * lambda_max {
            return Err(Error::invalid(format!(
                "matrix is not positive semidefinite (λ_min = {lambda_min:e}, λ_max = {lambda_max:e})"
            )));
        }
        let floor = KAPPA_FLOOR * lambda_max;
        let clamped = lambda_min < floor;
        let kappa = lambda_max / lambda_min.max(floor);
        Ok(Self {
            trace: matrix.trace(),
            matrix,
            lambda_min,
            lambda_max,
            kappa,
            clamped,
        })
    }

    /// `Θ₀ = G Gᵀ` from per-sample output gradient rows.
    pub fn from_gradients(grads: &Matrix) -> Result<Self> {
        Self::from_matrix(grads.row_gram())
    }

    pub fn size(&self) -> usize {
        self.matrix.rows()
    }
}

fn attach_arch(e: Error, model: &ModelInstance) -> Error {
    match e {
        Error::Singular(detail) | Error::InvalidArgument(detail) => Error::NumericFailure {
            arch: model.id(),
            detail,
        },
        Error::NoConvergence { sweeps } => Error::NumericFailure {
            arch: model.id(),
            detail: format!("eigensolver did not converge in {sweeps} sweeps"),
        },
        other => other,
    }
}

pub fn ntk_matrix(model: &ModelInstance, data: &Dataset) -> Result<NtkSummary> {
    let bundle = loss_gradients(model, data)?;
    NtkSummary::from_gradients(&bundle.output_grads).map_err(|e| attach_arch(e, model))
}

/// `√(trace(Θ₀)/m)` and `√(Σᵢ‖∇θf(xᵢ)‖²/m)`.
pub fn trace_metric_paths(ntk: &NtkSummary, grads: &Matrix) -> (f64, f64) {
    let m = grads.rows() as f64;
    let via_matrix = (ntk.trace / m).sqrt();
    let via_norms = ((0..grads.rows())
        .map(|i| dot(grads.row(i), grads.row(i)))
        .sum::<f64>()
        / m)
        .sqrt();
    (via_matrix, via_norms)
}

fn check_trace_paths(model: &ModelInstance, a: f64, b: f64) -> Result<f64> {
    if (a - b).abs() > TRACE_PATH_TOL * a.abs().max(b.abs()) {
        return Err(Error::NumericFailure {
            arch: model.id(),
            detail: format!("trace metric routes disagree: {a} vs {b}"),
        });
    }
    Ok(a)
}

/// M_trace, checked against the matrix-free route.
pub fn metric_trace(model: &ModelInstance, data: &Dataset) -> Result<f64> {
    let bundle = loss_gradients(model, data)?;
    let trace: f64 = (0..bundle.output_grads.rows())
        .map(|i| bundle.output_grads.row(i).iter().map(|g| g * g).sum::<f64>())
        .sum();
    // A zero kernel has no spectrum to summarize but a well-defined trace of 0.
    let via_matrix = match NtkSummary::from_gradients(&bundle.output_grads) {
        Ok(s) => trace_metric_paths(&s, &bundle.output_grads).0,
        Err(Error::Singular(_)) if trace == 0.0 => 0.0,
        Err(e) => return Err(attach_arch(e, model)),
    };
    let via_norms = (trace / data.len() as f64).sqrt();
    check_trace_paths(model, via_matrix, via_norms)
}

fn grad_from_bundle(b: &GradientBundle) -> f64 {
    norm(&b.mean_loss_grad)
}

fn snip_from_bundle(model: &ModelInstance, b: &GradientBundle) -> f64 {
    dot(model.params(), &b.mean_loss_grad).abs()
}

fn grasp_from_bundle(
    model: &ModelInstance,
    data: &Dataset,
    b: &GradientBundle,
    method: HvpMethod,
) -> Result<f64> {
    let theta = model.params();
    let mut total = 0.0;
    for i in 0..data.len() {
        let v = b.loss_grads.row(i);
        if v.iter().all(|&x| x == 0.0) {
            continue;
        }
        let hv = hvp(model, data, i, v, method)?;
        total += dot(theta, &hv);
    }
    Ok((total / data.len() as f64).abs())
}

/// `‖(1/m) Σᵢ ∇θ ℓᵢ‖₂`
pub fn metric_grad(model: &ModelInstance, data: &Dataset) -> Result<f64> {
    Ok(grad_from_bundle(&loss_gradients(model, data)?))
}

/// `|θ₀ᵀ (1/m) Σᵢ ∇θ ℓᵢ|`
pub fn metric_snip(model: &ModelInstance, data: &Dataset) -> Result<f64> {
    Ok(snip_from_bundle(model, &loss_gradients(model, data)?))
}

/// `|(1/m) Σᵢ θ₀ᵀ Hᵢ ∇θ ℓᵢ|`
pub fn metric_grasp(model: &ModelInstance, data: &Dataset, method: HvpMethod) -> Result<f64> {
    let b = loss_gradients(model, data)?;
    grasp_from_bundle(model, data, &b, method)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Grad,
    Snip,
    Grasp,
    Trace,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Grad,
        MetricKind::Snip,
        MetricKind::Grasp,
        MetricKind::Trace,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MetricKind::Grad => "grad",
            MetricKind::Snip => "snip",
            MetricKind::Grasp => "grasp",
            MetricKind::Trace => "trace",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::invalid(format!("unknown metric {s:?}")))
    }
}

/// Metric values and κ for one architecture on one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub arch_id: String,
    pub grad: f64,
    pub snip: f64,
    pub grasp: f64,
    #[serde(rename = "trace")]
    pub trace_norm: f64,
    pub kappa: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub clamped: bool,
    pub m: usize,
    pub seed: u64,
    /// Set when the architecture could not be scored; metric fields are then 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl MetricReport {
    pub fn value(&self, kind: MetricKind) -> f64 {
        match kind {
            MetricKind::Grad => self.grad,
            MetricKind::Snip => self.snip,
            MetricKind::Grasp => self.grasp,
            MetricKind::Trace => self.trace_norm,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }

    /// Usable for ranking by `kind`: scored and with a strictly positive metric.
    pub fn usable(&self, kind: MetricKind) -> bool {
        self.is_ok() && self.value(kind) > 0.0 && self.value(kind).is_finite()
    }

    fn failed(arch_id: String, m: usize, seed: u64, reason: String) -> Self {
        Self {
            arch_id,
            grad: 0.0,
            snip: 0.0,
            grasp: 0.0,
            trace_norm: 0.0,
            kappa: 0.0,
            lambda_min: 0.0,
            lambda_max: 0.0,
            clamped: false,
            m,
            seed,
            failure: Some(reason),
        }
    }
}

/// All four metrics and κ from a single gradient bundle.
pub fn compute_report(model: &ModelInstance, data: &Dataset) -> Result<MetricReport> {
    let bundle = loss_gradients(model, data)?;
    let ntk = NtkSummary::from_gradients(&bundle.output_grads).map_err(|e| attach_arch(e, model))?;
    let (via_matrix, via_norms) = trace_metric_paths(&ntk, &bundle.output_grads);
    let trace_norm = check_trace_paths(model, via_matrix, via_norms)?;
    let grasp = grasp_from_bundle(model, data, &bundle, HvpMethod::FiniteDiff)?;
    let report = MetricReport {
        arch_id: model.id(),
        grad: grad_from_bundle(&bundle),
        snip: snip_from_bundle(model, &bundle),
        grasp,
        trace_norm,
        kappa: ntk.kappa,
        lambda_min: ntk.lambda_min,
        lambda_max: ntk.lambda_max,
        clamped: ntk.clamped,
        m: data.len(),
        seed: model.seed(),
        failure: None,
    };
    let values = [report.grad, report.snip, report.grasp, report.trace_norm, report.kappa];
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NumericFailure {
            arch: report.arch_id,
            detail: "metric outside [0, ∞)".into(),
        });
    }
    Ok(report)
}

/// How pools are instantiated and scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub width: usize,
    /// Metric batch size m; a seeded subset is drawn when the data is larger.
    pub batch: usize,
    pub scheme: InitScheme,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            width: 32,
            batch: DEFAULT_BATCH,
            scheme: InitScheme::Lecun,
            seed: 0,
            parallel: true,
        }
    }
}

/// Seed for an architecture's weights under a global seed.
pub fn arch_seed(global: u64, arch_id: &str) -> u64 {
    rng::derive_seed(global, arch_id)
}

/// The metric batch: the whole dataset when it has at most `batch` samples,
/// otherwise a seeded sample without replacement (in ascending index order).
pub fn metric_batch(data: &Dataset, batch: usize, seed: u64) -> Result<Dataset> {
    if batch == 0 {
        return Err(Error::invalid("metric batch size must be at least 1"));
    }
    if data.len() <= batch {
        return Ok(data.clone());
    }
    let mut rng = rng::derived_rng(seed, "metric-batch");
    let mut idx = rand::seq::index::sample(&mut rng, data.len(), batch).into_vec();
    idx.sort_unstable();
    data.subset(format!("{}-batch{batch}", data.name), &idx)
}

fn score_one(arch: &CellArch, data: &Dataset, config: &ScoreConfig) -> MetricReport {
    let id = arch.encode();
    let seed = arch_seed(config.seed, &id);
    let result = ModelInstance::init(
        Architecture::Cell(*arch),
        config.width,
        data.input_dim(),
        config.scheme,
        seed,
    )
    .and_then(|model| compute_report(&model, data));
    match result {
        Ok(r) => r,
        Err(e) => MetricReport::failed(id, data.len(), seed, e.to_string()),
    }
}

/// One report per pool entry, in pool order. Failures are recorded in-report.
pub fn score_pool(pool: &ArchPool, data: &Dataset, config: &ScoreConfig) -> Result<Vec<MetricReport>> {
    if pool.is_empty() {
        return Err(Error::invalid("cannot score an empty pool"));
    }
    if config.width == 0 {
        return Err(Error::invalid("width must be at least 1"));
    }
    let batch = metric_batch(data, config.batch, config.seed)?;
    Ok(map_archs(pool.entries(), config.parallel, |a| score_one(a, &batch, config)))
}

/// Order-preserving map that runs on the rayon pool when enabled.
pub(crate) fn map_archs<T, F>(archs: &[CellArch], parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&CellArch) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return archs.par_iter().map(&f).collect();
    }
    let _ = parallel;
    archs.iter().map(f).collect()
}
