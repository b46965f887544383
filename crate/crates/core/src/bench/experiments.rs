use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::correlation::{kendall, pearson, spearman};
use super::tabular::TabularBench;
use crate::bounds::{nonrealizable_score, realizable_score, BoundParams};
use crate::error::{Error, Result};
use crate::hnas::{propose, GpConfig, Point};
use crate::linalg::mean_std;
use crate::metrics::{score_pool, MetricKind, MetricReport, ScoreConfig};
use crate::netcore::Dataset;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Realizable,
    Nonrealizable,
}

impl Scenario {
    pub fn label(self) -> &'static str {
        match self {
            Scenario::Realizable => "realizable",
            Scenario::Nonrealizable => "nonrealizable",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "realizable" => Ok(Scenario::Realizable),
            "nonrealizable" | "non-realizable" => Ok(Scenario::Nonrealizable),
            _ => Err(Error::invalid(format!("unknown scenario {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub scenario: Scenario,
    pub metric: MetricKind,
    pub spearman: f64,
    pub kendall: f64,
    pub pearson: f64,
    pub n: usize,
    /// Bound parameters behind a non-realizable row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<BoundParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rows: Vec<CorrelationRow>,
}

impl CorrelationReport {
    pub fn row(&self, scenario: Scenario, metric: MetricKind) -> Option<&CorrelationRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.metric == metric)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["scenario", "metric", "spearman", "kendall", "pearson", "n"])?;
        for r in &self.rows {
            out.write_record([
                r.scenario.label().to_string(),
                r.metric.label().to_string(),
                r.spearman.to_string(),
                r.kendall.to_string(),
                r.pearson.to_string(),
                r.n.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Metric values, κ and test errors over the architectures both sides cover.
struct Paired {
    metric: Vec<f64>,
    kappa: Vec<f64>,
    test: Vec<f64>,
}

fn pair(bench: &TabularBench, reports: &[MetricReport], metric: MetricKind) -> Result<Paired> {
    let by_id: HashMap<&str, &MetricReport> =
        reports.iter().map(|r| (r.arch_id.as_str(), r)).collect();
    let mut p = Paired {
        metric: vec![],
        kappa: vec![],
        test: vec![],
    };
    for (id, test) in bench.test_errors() {
        if let Some(r) = by_id.get(id).filter(|r| r.usable(metric)) {
            p.metric.push(r.value(metric));
            p.kappa.push(r.kappa);
            p.test.push(test);
        }
    }
    if p.test.len() < 3 {
        return Err(Error::invalid(format!(
            "bench and reports share only {} usable architectures for {metric}; need 3",
            p.test.len()
        )));
    }
    Ok(p)
}

fn scores(p: &Paired, scenario: Scenario, params: Option<&BoundParams>) -> Result<Vec<f64>> {
    p.metric
        .iter()
        .zip(&p.kappa)
        .map(|(&m, &k)| match (scenario, params) {
            (Scenario::Realizable, _) => realizable_score(m),
            (Scenario::Nonrealizable, Some(bp)) => nonrealizable_score(m, k, bp),
            (Scenario::Nonrealizable, None) => {
                Err(Error::invalid("the non-realizable score needs bound parameters"))
            }
        })
        .collect()
}

fn row_for(
    p: &Paired,
    scenario: Scenario,
    metric: MetricKind,
    params: Option<&BoundParams>,
) -> Result<CorrelationRow> {
    let s = scores(p, scenario, params)?;
    Ok(CorrelationRow {
        scenario,
        metric,
        spearman: spearman(&s, &p.test)?,
        kendall: kendall(&s, &p.test)?,
        pearson: pearson(&s, &p.test)?,
        n: s.len(),
        params: match scenario {
            Scenario::Realizable => None,
            Scenario::Nonrealizable => params.copied(),
        },
    })
}

/// Correlation of each metric's bound score with the bench's test errors.
pub fn correlate(
    bench: &TabularBench,
    reports: &[MetricReport],
    scenario: Scenario,
    params: Option<&BoundParams>,
) -> Result<CorrelationReport> {
    let rows = MetricKind::ALL
        .into_iter()
        .map(|metric| row_for(&pair(bench, reports, metric)?, scenario, metric, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrelationReport { rows })
}

/// Search range of `log₁₀(η/(mc))`.
pub const LOG10_RATE_RANGE: (f64, f64) = (-8.0, 2.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSearch {
    pub metric: MetricKind,
    pub params: BoundParams,
    pub row: CorrelationRow,
    /// Every probed `(log₁₀ rate, spearman)` in order.
    pub probes: Vec<(f64, f64)>,
}

/// Parameters for the non-realizable score with `c = 1` and `t = 1`; the
/// learning rate is `rate · m`.
pub fn bound_params_for_rate(rate: f64, m: usize) -> Result<BoundParams> {
    BoundParams::new(rate * m as f64, 1.0, 1, m)
}

/// Per metric, Bayesian optimization over the combined rate `η/(mc)` to
/// maximize Spearman between the non-realizable score and test error.
pub fn optimize_bound_params(
    bench: &TabularBench,
    reports: &[MetricReport],
    budget: usize,
    seed: u64,
) -> Result<(Vec<BoundSearch>, CorrelationReport)> {
    if budget == 0 {
        return Err(Error::invalid("optimization budget must be at least 1"));
    }
    let batch = reports
        .iter()
        .find(|r| r.is_ok())
        .map(|r| r.m)
        .ok_or_else(|| Error::invalid("no scored architectures"))?;
    let gp = GpConfig::default();
    let (lo, hi) = LOG10_RATE_RANGE;
    let mut searches = Vec::new();
    for metric in MetricKind::ALL {
        let paired = pair(bench, reports, metric)?;
        let mut design = rng::derived_rng(seed, &format!("bound-design-{metric}"));
        let mut cand = rng::derived_rng(seed, &format!("bound-candidates-{metric}"));
        let mut points: Vec<Point> = vec![];
        let mut vals: Vec<f64> = vec![];
        let mut probes = vec![];
        for k in 0..budget {
            let u = if k < 5.min(budget) {
                [design.random::<f64>(), 0.0]
            } else {
                let p = propose(&points, &vals, &gp, 2048, &mut cand)?;
                [p[0], 0.0]
            };
            let log_rate = lo + (hi - lo) * u[0];
            let params = bound_params_for_rate(10f64.powf(log_rate), batch)?;
            let rho = match row_for(&paired, Scenario::Nonrealizable, metric, Some(&params)) {
                Ok(r) => r.spearman,
                Err(Error::UndefinedCorrelation(_)) => f64::NEG_INFINITY,
                Err(e) => return Err(e),
            };
            points.push(u);
            vals.push(rho);
            probes.push((log_rate, rho));
        }
        let mut best = 0;
        for (i, v) in vals.iter().enumerate() {
            if *v > vals[best] {
                best = i;
            }
        }
        let params = bound_params_for_rate(10f64.powf(probes[best].0), batch)?;
        let row = row_for(&paired, Scenario::Nonrealizable, metric, Some(&params))?;
        searches.push(BoundSearch {
            metric,
            params,
            row,
            probes,
        });
    }
    let report = CorrelationReport {
        rows: searches.iter().map(|s| s.row.clone()).collect(),
    };
    Ok((searches, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub scenario: Scenario,
    pub metric: MetricKind,
    /// Spearman against the fixed bench, one per metric dataset.
    pub correlations: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation across metric datasets.
    pub std: f64,
    /// Architectures whose Θ₀ had its smallest eigenvalue floored, per dataset.
    pub clamped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub datasets: Vec<String>,
    pub rows: Vec<TransferRow>,
}

impl TransferReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["scenario", "metric", "datasets", "mean", "std"])?;
        for r in &self.rows {
            out.write_record([
                r.scenario.label().to_string(),
                r.metric.label().to_string(),
                r.correlations.len().to_string(),
                r.mean.to_string(),
                r.std.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Recomputes metrics on each dataset and correlates them with one fixed
/// bench; the spread across datasets measures how well metrics transfer.
pub fn transfer_experiment(
    bench: &TabularBench,
    metric_datasets: &[Dataset],
    score: &ScoreConfig,
    scenario: Scenario,
    params: Option<&BoundParams>,
) -> Result<TransferReport> {
    if metric_datasets.len() < 2 {
        return Err(Error::invalid("transfer needs at least two metric datasets"));
    }
    let pool = bench.pool()?;
    let per_dataset = metric_datasets
        .iter()
        .map(|d| {
            let reports = score_pool(&pool, d, score)?;
            let clamped = reports.iter().filter(|r| r.is_ok() && r.clamped).count();
            Ok((correlate(bench, &reports, scenario, params)?, clamped))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = MetricKind::ALL
        .into_iter()
        .map(|metric| {
            let correlations: Vec<f64> = per_dataset
                .iter()
                .map(|(rep, _)| rep.row(scenario, metric).expect("row per metric").spearman)
                .collect();
            let (mean, pop_std) = mean_std(&correlations);
            let n = correlations.len() as f64;
            TransferRow {
                scenario,
                metric,
                mean,
                std: pop_std * (n / (n - 1.0)).sqrt(),
                correlations,
                clamped: per_dataset.iter().map(|(_, c)| *c).collect(),
            }
        })
        .collect();
    Ok(TransferReport {
        datasets: metric_datasets.iter().map(|d| d.name.clone()).collect(),
        rows,
    })
}
