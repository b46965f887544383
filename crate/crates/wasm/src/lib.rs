//! Browser bindings for three small ntklab experiments. Each export returns a
//! JSON string; the plain functions underneath are what the tests exercise.

use ntklab::bench::teacher_splits;
use ntklab::bounds::{nonrealizable_score, BoundParams, ObjectiveParams};
use ntklab::hnas::select_candidate;
use ntklab::linalg::Matrix;
use ntklab::metrics::{score_pool, MetricKind, MetricReport, NtkSummary, ScoreConfig};
use ntklab::searchspace::ArchPool;
use ntklab::topology::{deep_ntk, random_inputs, wide_ntk, TopologySpec};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct KernelView {
    pub matrix: Vec<Vec<f64>>,
    pub kappa: f64,
    pub trace_metric: f64,
}

impl KernelView {
    fn from_summary(s: &NtkSummary) -> Self {
        Self {
            matrix: rows(&s.matrix),
            kappa: s.kappa,
            trace_metric: (s.trace / s.size() as f64).sqrt(),
        }
    }
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m[(i, j)]).collect()).collect()
}

#[derive(Debug, Serialize)]
pub struct TopologyView {
    pub wide: KernelView,
    pub deep: KernelView,
    /// `L·n` and `L·nᴸ`.
    pub wide_target: f64,
    pub deep_target: f64,
}

pub fn topology_view(n: usize, layers: usize, m: usize, seed: u64) -> Result<TopologyView, String> {
    let spec = TopologySpec::new(n, layers, m, seed).map_err(|e| e.to_string())?;
    let x = random_inputs(&spec).map_err(|e| e.to_string())?;
    let wide = wide_ntk(&spec, &x).map_err(|e| e.to_string())?;
    let deep = deep_ntk(&spec, &x).map_err(|e| e.to_string())?;
    Ok(TopologyView {
        wide: KernelView::from_summary(&wide),
        deep: KernelView::from_summary(&deep),
        wide_target: spec.wide_diagonal(),
        deep_target: spec.deep_diagonal(),
    })
}

#[derive(Debug, Serialize)]
pub struct PoolPoint {
    pub id: String,
    pub trace_metric: f64,
    pub kappa: f64,
}

/// A scored pool held between calls so the objective weights can be moved
/// without rescoring.
#[wasm_bindgen]
pub struct PoolDemo {
    reports: Vec<MetricReport>,
}

impl PoolDemo {
    pub fn build(size: usize, width: usize, seed: u64) -> Result<Self, String> {
        let pool = ArchPool::sample(size, seed).map_err(|e| e.to_string())?;
        let data = teacher_splits(4, 16, 1, 1, seed).map_err(|e| e.to_string())?.train;
        let cfg = ScoreConfig {
            width,
            seed,
            parallel: false,
            ..Default::default()
        };
        let reports = score_pool(&pool, &data, &cfg).map_err(|e| e.to_string())?;
        Ok(Self { reports })
    }

    pub fn points(&self) -> Vec<PoolPoint> {
        self.reports
            .iter()
            .filter(|r| r.usable(MetricKind::Trace))
            .map(|r| PoolPoint {
                id: r.arch_id.clone(),
                trace_metric: r.trace_norm,
                kappa: r.kappa,
            })
            .collect()
    }

    pub fn pick(&self, mu: f64, nu: f64) -> Result<String, String> {
        let p = ObjectiveParams::new(mu, nu).map_err(|e| e.to_string())?;
        select_candidate(&self.reports, MetricKind::Trace, &p).map_err(|e| e.to_string())
    }
}

#[wasm_bindgen]
impl PoolDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, width: usize, seed: u32) -> Result<PoolDemo, JsError> {
        Self::build(size, width, seed.into()).map_err(|e| JsError::new(&e))
    }

    /// `[{id, trace_metric, kappa}]` for every scored architecture.
    #[wasm_bindgen(js_name = pointsJson)]
    pub fn points_json(&self) -> String {
        serde_json::to_string(&self.points()).expect("points serialize")
    }

    /// Pool member minimizing `κ/M + μ(M² − ν)²`.
    pub fn select(&self, mu: f64, nu: f64) -> Result<String, JsError> {
        self.pick(mu, nu).map_err(|e| JsError::new(&e))
    }
}

#[derive(Debug, Serialize)]
pub struct BoundCurve {
    pub metric: Vec<f64>,
    /// Loss term `(m/2)(1 − ηM²/(mc))^{2t}`.
    pub loss_term: Vec<f64>,
    /// Conditioning term `κ/M`.
    pub kappa_term: Vec<f64>,
    pub total: Vec<f64>,
    /// Largest M the loss term is monotone on.
    pub edge: f64,
}

/// The non-realizable score on a grid of M up to `√(mc/η)` for a fixed κ,
/// with `c = 1` and learning rate `rate · m`.
pub fn bound_curve(kappa: f64, rate: f64, t: u32, m: usize, samples: usize) -> Result<BoundCurve, String> {
    if samples < 2 {
        return Err("need at least two samples".into());
    }
    let p = BoundParams::new(rate * m as f64, 1.0, t, m).map_err(|e| e.to_string())?;
    let edge = (m as f64 * p.c / p.eta).sqrt();
    let mut curve = BoundCurve {
        metric: vec![],
        loss_term: vec![],
        kappa_term: vec![],
        total: vec![],
        edge,
    };
    for i in 1..=samples {
        let x = edge * i as f64 / samples as f64;
        let total = nonrealizable_score(x, kappa, &p).map_err(|e| e.to_string())?;
        curve.metric.push(x);
        curve.kappa_term.push(kappa / x);
        curve.loss_term.push(total - kappa / x);
        curve.total.push(total);
    }
    Ok(curve)
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map(|v| serde_json::to_string(&v).expect("views serialize"))
        .map_err(|e| JsError::new(&e))
}

/// Wide and deep kernels on the same orthonormal inputs, as JSON.
#[wasm_bindgen(js_name = topologyKernels)]
pub fn topology_kernels(n: usize, layers: usize, m: usize, seed: u32) -> Result<String, JsError> {
    to_js(topology_view(n, layers, m, seed.into()))
}

/// Both terms of the non-realizable score over M, as JSON.
#[wasm_bindgen(js_name = boundCurve)]
pub fn bound_curve_json(kappa: f64, rate: f64, t: u32, m: usize, samples: usize) -> Result<String, JsError> {
    to_js(bound_curve(kappa, rate, t, m, samples))
}
