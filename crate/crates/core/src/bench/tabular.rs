use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::data::Splits;
use crate::bounds::{hnas_objective, ObjectiveParams};
use crate::error::{Error, Result};
use crate::hnas::Evaluator;
use crate::metrics::{arch_seed, map_archs, ntk_matrix, MetricKind, MetricReport};
use crate::netcore::{mse, train_gd, Architecture, Dataset, InitScheme, ModelInstance};
use crate::rng;
use crate::searchspace::{ArchPool, CellArch};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    Trained,
    Synthetic,
}

/// Trained (or planted) performance of one architecture. Flagged entries
/// carry no scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    /// Validation score, higher is better.
    pub val: Option<f64>,
    /// Test error, lower is better.
    pub test: Option<f64>,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

impl BenchEntry {
    fn flagged(steps: usize, why: String) -> Self {
        Self {
            val: None,
            test: None,
            steps,
            flag: Some(why),
        }
    }

    pub fn is_flagged(&self) -> bool {
        self.flag.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularBench {
    pub schema_version: u32,
    pub mode: BenchMode,
    pub seed: u64,
    pub dataset_fingerprint: String,
    /// Settings that produced the bench, echoed for reproducibility.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub entries: BTreeMap<String, BenchEntry>,
}

impl TabularBench {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        for (id, e) in &self.entries {
            CellArch::decode(id)?;
            let finite = |v: Option<f64>| v.is_some_and(f64::is_finite);
            if !e.is_flagged() && !(finite(e.val) && finite(e.test)) {
                return Err(Error::invalid(format!("bench entry {id} lacks finite scores")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bench: Self = serde_json::from_str(text)?;
        bench.validate()?;
        Ok(bench)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("benches serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    /// Unflagged `(id, test error)` pairs in ID order.
    pub fn test_errors(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries
            .iter()
            .filter_map(|(id, e)| e.test.filter(|_| !e.is_flagged()).map(|t| (id.as_str(), t)))
    }

    pub fn pool(&self) -> Result<ArchPool> {
        let archs = self
            .entries
            .keys()
            .map(|id| CellArch::decode(id))
            .collect::<Result<Vec<_>>>()?;
        ArchPool::from_archs(archs, crate::searchspace::Provenance::File)
    }

    /// The true best validation score among unflagged entries.
    pub fn best_val(&self) -> Option<(&str, f64)> {
        self.entries
            .iter()
            .filter_map(|(id, e)| e.val.map(|v| (id.as_str(), v)))
            .fold(None, |acc, (id, v)| match acc {
                Some((_, b)) if b >= v => acc,
                _ => Some((id, v)),
            })
    }
}

/// How each architecture is trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub width: usize,
    pub scheme: InitScheme,
    pub steps: usize,
    /// Learning rates never exceed this.
    pub lr_cap: f64,
    /// Fraction of the stability limit `m / λ_max(Θ₀)` used as learning rate.
    pub lr_fraction: f64,
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            width: 32,
            scheme: InitScheme::Lecun,
            steps: 200,
            lr_cap: 0.1,
            lr_fraction: 0.5,
            parallel: true,
        }
    }
}

impl TrainConfig {
    /// `min(cap, fraction · m / λ_max(Θ₀))`; the cap alone for a zero kernel.
    pub fn learning_rate(&self, model: &ModelInstance, train: &Dataset) -> f64 {
        match ntk_matrix(model, train) {
            Ok(ntk) => self
                .lr_cap
                .min(self.lr_fraction * train.len() as f64 / ntk.lambda_max),
            Err(_) => self.lr_cap,
        }
    }
}

/// Trains one architecture and scores it on the validation and test splits.
pub fn train_entry(arch: &CellArch, splits: &Splits, config: &TrainConfig, seed: u64) -> BenchEntry {
    let id = arch.encode();
    let model = match ModelInstance::init(
        Architecture::Cell(*arch),
        config.width,
        splits.train.input_dim(),
        config.scheme,
        arch_seed(seed, &id),
    ) {
        Ok(m) => m,
        Err(e) => return BenchEntry::flagged(0, e.to_string()),
    };
    let lr = config.learning_rate(&model, &splits.train);
    let trained = match train_gd(&model, &splits.train, lr, config.steps) {
        Ok((m, _)) => m,
        Err(Error::Divergence { step, .. }) => {
            return BenchEntry::flagged(step, format!("diverged at step {step}"))
        }
        Err(e) => return BenchEntry::flagged(0, e.to_string()),
    };
    match (mse(&trained, &splits.val), mse(&trained, &splits.test)) {
        (Ok(v), Ok(t)) if v.is_finite() && t.is_finite() => BenchEntry {
            val: Some(-v),
            test: Some(t),
            steps: config.steps,
            flag: None,
        },
        _ => BenchEntry::flagged(config.steps, "non-finite evaluation loss".into()),
    }
}

/// Trains every pool member with full-batch gradient descent.
pub fn build_bench(pool: &ArchPool, splits: &Splits, config: &TrainConfig, seed: u64) -> Result<TabularBench> {
    if pool.is_empty() {
        return Err(Error::invalid("cannot build a bench from an empty pool"));
    }
    if config.width == 0 {
        return Err(Error::invalid("width must be at least 1"));
    }
    let results = map_archs(pool.entries(), config.parallel, |a| {
        (a.encode(), train_entry(a, splits, config, seed))
    });
    Ok(TabularBench {
        schema_version: SCHEMA_VERSION,
        mode: BenchMode::Trained,
        seed,
        dataset_fingerprint: splits.train.fingerprint(),
        config: None,
        entries: results.into_iter().collect(),
    })
}

/// Planted bench: validation score `−F + noise`, test error `F + noise`, where
/// `F` is the search objective at hidden weights. Noise is seeded per
/// architecture, so entries do not depend on report order.
pub fn synth_bench(
    reports: &[MetricReport],
    dataset_fingerprint: &str,
    metric: MetricKind,
    hidden: &ObjectiveParams,
    sigma: f64,
    seed: u64,
) -> Result<TabularBench> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("noise level must be >= 0, got {sigma}")));
    }
    hidden.validate()?;
    let mut entries = BTreeMap::new();
    for r in reports {
        let entry = if r.usable(metric) {
            let f = hnas_objective(r.value(metric), r.kappa, hidden)?;
            let mut noise = rng::derived_rng(seed, &format!("synth-noise{}", r.arch_id));
            let (e_val, e_test): (f64, f64) = (noise.sample(StandardNormal), noise.sample(StandardNormal));
            if f.is_finite() {
                BenchEntry {
                    val: Some(-f + sigma * e_val),
                    test: Some(f + sigma * e_test),
                    steps: 0,
                    flag: None,
                }
            } else {
                BenchEntry::flagged(0, "objective overflow".into())
            }
        } else {
            BenchEntry::flagged(0, format!("unscored for {metric}"))
        };
        entries.insert(r.arch_id.clone(), entry);
    }
    Ok(TabularBench {
        schema_version: SCHEMA_VERSION,
        mode: BenchMode::Synthetic,
        seed,
        dataset_fingerprint: dataset_fingerprint.to_string(),
        config: None,
        entries,
    })
}

/// Looks validation scores up in a bench; flagged entries score `-inf`.
pub struct TabularEvaluator<'a> {
    pub bench: &'a TabularBench,
}

impl Evaluator for TabularEvaluator<'_> {
    fn evaluate(&mut self, arch_id: &str) -> Result<f64> {
        let entry = self
            .bench
            .entries
            .get(arch_id)
            .ok_or_else(|| Error::invalid(format!("{arch_id} is not in the bench")))?;
        Ok(entry.val.unwrap_or(f64::NEG_INFINITY))
    }
}

/// Trains on demand with the bench policy; diverged runs score `-inf`.
pub struct LiveEvaluator<'a> {
    pub splits: &'a Splits,
    pub config: TrainConfig,
    pub seed: u64,
}

impl Evaluator for LiveEvaluator<'_> {
    fn evaluate(&mut self, arch_id: &str) -> Result<f64> {
        let arch = CellArch::decode(arch_id)?;
        let entry = train_entry(&arch, self.splits, &self.config, self.seed);
        Ok(entry.val.unwrap_or(f64::NEG_INFINITY))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::teacher_splits;
    use crate::searchspace::Op;

    fn small_config() -> TrainConfig {
        TrainConfig {
            width: 6,
            steps: 20,
            ..Default::default()
        }
    }

    #[test]
    fn zero_steps_scores_initialization() {
        let splits = teacher_splits(4, 8, 6, 6, 2).unwrap();
        let arch = CellArch::uniform(Op::Linear);
        let pool = ArchPool::from_archs(vec![arch], crate::searchspace::Provenance::File).unwrap();
        let cfg = TrainConfig {
            steps: 0,
            ..small_config()
        };
        let bench = build_bench(&pool, &splits, &cfg, 9).unwrap();
        let model = ModelInstance::init(arch, 6, 4, InitScheme::Lecun, arch_seed(9, &arch.encode())).unwrap();
        let entry = &bench.entries[&arch.encode()];
        assert_eq!(entry.val, Some(-mse(&model, &splits.val).unwrap()));
        assert_eq!(entry.test, Some(mse(&model, &splits.test).unwrap()));
    }

    #[test]
    fn rebuild_is_byte_identical() {
        let splits = teacher_splits(4, 8, 6, 6, 2).unwrap();
        let pool = ArchPool::sample(6, 4).unwrap();
        let a = build_bench(&pool, &splits, &small_config(), 1).unwrap().to_json();
        let serial = TrainConfig {
            parallel: false,
            ..small_config()
        };
        let b = build_bench(&pool, &splits, &serial, 1).unwrap().to_json();
        assert_eq!(a, b);
        let back = TabularBench::from_json(&a).unwrap();
        assert_eq!(back.to_json(), a);
    }

    #[test]
    fn schema_and_ids_are_checked() {
        let splits = teacher_splits(4, 8, 6, 6, 2).unwrap();
        let pool = ArchPool::sample(2, 4).unwrap();
        let mut bench = build_bench(&pool, &splits, &small_config(), 1).unwrap();
        bench.schema_version = 2;
        assert!(matches!(TabularBench::from_json(&bench.to_json()), Err(Error::Schema { .. })));
        bench.schema_version = SCHEMA_VERSION;
        bench.entries.insert("|nope|x1".into(), BenchEntry::flagged(0, "x".into()));
        assert!(TabularBench::from_json(&bench.to_json()).is_err());
    }

    #[test]
    fn tabular_evaluator_maps_flags_to_neg_inf() {
        let mut entries = BTreeMap::new();
        let a = CellArch::uniform(Op::Skip).encode();
        let b = CellArch::uniform(Op::Linear).encode();
        entries.insert(a.clone(), BenchEntry::flagged(3, "diverged at step 3".into()));
        entries.insert(
            b.clone(),
            BenchEntry {
                val: Some(-0.2),
                test: Some(0.3),
                steps: 10,
                flag: None,
            },
        );
        let bench = TabularBench {
            schema_version: SCHEMA_VERSION,
            mode: BenchMode::Trained,
            seed: 0,
            dataset_fingerprint: String::new(),
            config: None,
            entries,
        };
        let mut ev = TabularEvaluator { bench: &bench };
        assert_eq!(ev.evaluate(&a).unwrap(), f64::NEG_INFINITY);
        assert_eq!(ev.evaluate(&b).unwrap(), -0.2);
        assert!(ev.evaluate("|zero|zero|zero|zero|zero|zero|x1").is_err());
        assert_eq!(bench.best_val(), Some((b.as_str(), -0.2)));
    }
}
