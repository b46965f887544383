use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::gp::{expected_improvement, gp_fit, GpConfig, Point};
use crate::bounds::{hnas_objective, ObjectiveParams};
use crate::error::{Error, Result};
use crate::metrics::{score_pool, MetricKind, MetricReport, ScoreConfig};
use crate::netcore::Dataset;
use crate::rng;
use crate::searchspace::ArchPool;

/// Maps an architecture ID to its validation score (higher is better).
/// `-inf` marks an architecture whose evaluation diverged.
pub trait Evaluator {
    fn evaluate(&mut self, arch_id: &str) -> Result<f64>;
}

impl<F: FnMut(&str) -> Result<f64>> Evaluator for F {
    fn evaluate(&mut self, arch_id: &str) -> Result<f64> {
        self(arch_id)
    }
}

mod val_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub k: usize,
    /// Objective weights; absent for baselines that do not use them.
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    pub arch: String,
    /// Written as `null` when the evaluation diverged.
    #[serde(with = "val_serde")]
    pub val: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub steps: Vec<SearchStep>,
    pub best_arch: String,
    #[serde(with = "val_serde")]
    pub best_val: f64,
    /// Evaluator calls actually made (repeat picks are served from cache).
    pub evals: usize,
}

impl SearchTrace {
    fn from_steps(steps: Vec<SearchStep>, evals: usize) -> Self {
        let mut best = 0;
        for (i, s) in steps.iter().enumerate() {
            if s.val > steps[best].val {
                best = i;
            }
        }
        let (best_arch, best_val) = steps
            .get(best)
            .map(|s| (s.arch.clone(), s.val))
            .unwrap_or_default();
        Self {
            steps,
            best_arch,
            best_val,
            evals,
        }
    }

    /// Whether `best_*` agree with the steps (earliest maximum wins).
    pub fn is_consistent(&self) -> bool {
        let Some(first) = self.steps.first() else {
            return false;
        };
        let mut best = first;
        for s in &self.steps {
            if s.val > best.val {
                best = s;
            }
        }
        best.arch == self.best_arch && (best.val == self.best_val)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("traces serialize")
    }
}

/// Evaluations cached by architecture ID.
struct Memo<'a, E: Evaluator + ?Sized> {
    evaluator: &'a mut E,
    cache: HashMap<String, f64>,
    calls: usize,
}

impl<'a, E: Evaluator + ?Sized> Memo<'a, E> {
    fn new(evaluator: &'a mut E) -> Self {
        Self {
            evaluator,
            cache: HashMap::new(),
            calls: 0,
        }
    }

    fn get(&mut self, arch: &str, steps: &[SearchStep]) -> Result<f64> {
        if let Some(&v) = self.cache.get(arch) {
            return Ok(v);
        }
        self.calls += 1;
        match self.evaluator.evaluate(arch) {
            Ok(v) if !v.is_nan() => {
                self.cache.insert(arch.to_string(), v);
                Ok(v)
            }
            Ok(_) => Err(self.abort(arch, "evaluator returned NaN".into(), steps)),
            Err(e) => Err(self.abort(arch, e.to_string(), steps)),
        }
    }

    fn abort(&self, arch: &str, detail: String, steps: &[SearchStep]) -> Error {
        let partial = (!steps.is_empty())
            .then(|| Box::new(SearchTrace::from_steps(steps.to_vec(), self.calls)));
        Error::Evaluator {
            arch: arch.to_string(),
            detail,
            partial,
        }
    }
}

fn usable<'r>(reports: &'r [MetricReport], metric: MetricKind) -> Result<Vec<&'r MetricReport>> {
    if reports.is_empty() {
        return Err(Error::invalid("no metric reports"));
    }
    let ok: Vec<_> = reports.iter().filter(|r| r.usable(metric)).collect();
    if ok.is_empty() {
        return Err(Error::NumericFailure {
            arch: "<pool>".into(),
            detail: format!("every architecture failed or has zero {metric}"),
        });
    }
    Ok(ok)
}

/// Pool argmin of the search objective; ties go to the smallest ID.
pub fn select_candidate(
    reports: &[MetricReport],
    metric: MetricKind,
    params: &ObjectiveParams,
) -> Result<String> {
    params.validate()?;
    let ok = usable(reports, metric)?;
    select_among(&ok, metric, params)
}

fn select_among(ok: &[&MetricReport], metric: MetricKind, params: &ObjectiveParams) -> Result<String> {
    let mut best: Option<(f64, &str)> = None;
    for r in ok {
        let score = hnas_objective(r.value(metric), r.kappa, params)?;
        let score = if score.is_nan() { f64::INFINITY } else { score };
        let better = match best {
            None => true,
            Some((b, id)) => score < b || (score == b && r.arch_id.as_str() < id),
        };
        if better {
            best = Some((score, &r.arch_id));
        }
    }
    Ok(best.expect("nonempty").1.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HnasConfig {
    pub metric: MetricKind,
    pub budget: usize,
    pub seed: u64,
    pub initial_design: usize,
    pub candidates: usize,
    pub log10_mu_range: (f64, f64),
    pub gp: GpConfig,
}

impl Default for HnasConfig {
    fn default() -> Self {
        Self {
            metric: MetricKind::Trace,
            budget: 20,
            seed: 0,
            initial_design: 5,
            candidates: 2048,
            log10_mu_range: (-8.0, 4.0),
            gp: GpConfig::default(),
        }
    }
}

/// Affine map between the unit square and `(log₁₀μ, log₁₀ν)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBox {
    pub log10_mu: (f64, f64),
    pub log10_nu: (f64, f64),
}

impl SearchBox {
    /// The ν range spans `[0.5 · min M², 2 · max M²]` over the usable pool.
    pub fn for_reports(reports: &[MetricReport], metric: MetricKind, log10_mu: (f64, f64)) -> Result<Self> {
        let ok = usable(reports, metric)?;
        Ok(Self::from_usable(&ok, metric, log10_mu))
    }

    fn from_usable(ok: &[&MetricReport], metric: MetricKind, log10_mu: (f64, f64)) -> Self {
        let sq = ok.iter().map(|r| r.value(metric).powi(2));
        let lo = sq.clone().fold(f64::INFINITY, f64::min);
        let hi = sq.fold(0.0, f64::max);
        Self {
            log10_mu,
            log10_nu: ((0.5 * lo).log10(), (2.0 * hi).log10()),
        }
    }

    pub fn params(&self, u: &Point) -> ObjectiveParams {
        let lerp = |(a, b): (f64, f64), t: f64| a + (b - a) * t;
        ObjectiveParams {
            mu: 10f64.powf(lerp(self.log10_mu, u[0])),
            nu: 10f64.powf(lerp(self.log10_nu, u[1])),
            t: 1,
        }
    }
}

fn uniform_point(rng: &mut rng::Rng) -> Point {
    [rng.random::<f64>(), rng.random::<f64>()]
}

/// Maximizer of EI over a fixed number of uniform candidates; ties go to the
/// lowest candidate index.
pub(crate) fn propose(
    points: &[Point],
    vals: &[f64],
    gp: &GpConfig,
    candidates: usize,
    rng: &mut rng::Rng,
) -> Result<Point> {
    // Diverged evaluations enter the surrogate at the worst finite value seen.
    let floor = vals
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 0.0 };
    let targets: Vec<f64> = vals
        .iter()
        .map(|&v| if v.is_finite() { v } else { floor })
        .collect();
    let best = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let state = gp_fit(points, &targets, gp)?;
    let mut chosen = uniform_point(rng);
    let mut chosen_ei = expected_improvement(&state, &chosen, best);
    for _ in 1..candidates {
        let q = uniform_point(rng);
        let ei = expected_improvement(&state, &q, best);
        if ei > chosen_ei {
            chosen = q;
            chosen_ei = ei;
        }
    }
    Ok(chosen)
}

/// The hybrid search loop over precomputed metric reports.
pub fn hnas_search_reports<E: Evaluator + ?Sized>(
    reports: &[MetricReport],
    config: &HnasConfig,
    evaluator: &mut E,
) -> Result<SearchTrace> {
    if config.budget == 0 {
        return Err(Error::invalid("search budget must be at least 1"));
    }
    if config.candidates == 0 {
        return Err(Error::invalid("candidate count must be at least 1"));
    }
    let ok = usable(reports, config.metric)?;
    let bbox = SearchBox::from_usable(&ok, config.metric, config.log10_mu_range);
    let mut design_rng = rng::derived_rng(config.seed, "hnas-design");
    let mut cand_rng = rng::derived_rng(config.seed, "hnas-candidates");
    let n_init = config.initial_design.max(1).min(config.budget);

    let mut memo = Memo::new(evaluator);
    let mut points: Vec<Point> = Vec::with_capacity(config.budget);
    let mut vals: Vec<f64> = Vec::with_capacity(config.budget);
    let mut steps: Vec<SearchStep> = Vec::with_capacity(config.budget);
    for k in 0..config.budget {
        let u = if k < n_init {
            uniform_point(&mut design_rng)
        } else {
            propose(&points, &vals, &config.gp, config.candidates, &mut cand_rng)?
        };
        let params = bbox.params(&u);
        let arch = select_among(&ok, config.metric, &params)?;
        let val = memo.get(&arch, &steps)?;
        points.push(u);
        vals.push(val);
        steps.push(SearchStep {
            k,
            mu: Some(params.mu),
            nu: Some(params.nu),
            arch,
            val,
        });
    }
    Ok(SearchTrace::from_steps(steps, memo.calls))
}

/// Scores the pool once, then runs the search loop.
pub fn hnas_search<E: Evaluator + ?Sized>(
    pool: &ArchPool,
    data: &Dataset,
    score: &ScoreConfig,
    config: &HnasConfig,
    evaluator: &mut E,
) -> Result<SearchTrace> {
    let reports = score_pool(pool, data, score)?;
    hnas_search_reports(&reports, config, evaluator)
}

/// Evaluates `budget` distinct pool members picked uniformly at random.
pub fn random_search<E: Evaluator + ?Sized>(
    arch_ids: &[String],
    budget: usize,
    seed: u64,
    evaluator: &mut E,
) -> Result<SearchTrace> {
    if budget == 0 {
        return Err(Error::invalid("search budget must be at least 1"));
    }
    if arch_ids.is_empty() {
        return Err(Error::invalid("cannot search an empty pool"));
    }
    let mut rng = rng::derived_rng(seed, "random-search");
    let picks = rand::seq::index::sample(&mut rng, arch_ids.len(), budget.min(arch_ids.len()));
    let mut memo = Memo::new(evaluator);
    let mut steps = Vec::with_capacity(picks.len());
    for (k, i) in picks.into_iter().enumerate() {
        let arch = arch_ids[i].clone();
        let val = memo.get(&arch, &steps)?;
        steps.push(SearchStep {
            k,
            mu: None,
            nu: None,
            arch,
            val,
        });
    }
    Ok(SearchTrace::from_steps(steps, memo.calls))
}

/// Evaluates only the pool member with the largest metric (smallest ID on ties).
pub fn training_free_argmax<E: Evaluator + ?Sized>(
    reports: &[MetricReport],
    metric: MetricKind,
    evaluator: &mut E,
) -> Result<SearchTrace> {
    let ok = usable(reports, metric)?;
    let mut best = ok[0];
    for r in &ok[1..] {
        let (v, b) = (r.value(metric), best.value(metric));
        if v > b || (v == b && r.arch_id < best.arch_id) {
            best = r;
        }
    }
    let mut memo = Memo::new(evaluator);
    let val = memo.get(&best.arch_id, &[])?;
    let steps = vec![SearchStep {
        k: 0,
        mu: None,
        nu: None,
        arch: best.arch_id.clone(),
        val,
    }];
    Ok(SearchTrace::from_steps(steps, memo.calls))
}
