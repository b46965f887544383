use std::collections::BTreeMap;

use ntklab::bench::{
    build_bench, correlate, kendall, optimize_bound_params, spearman, synth_bench, teacher_splits,
    transfer_experiment, BenchEntry, BenchMode, Scenario, Splits, TabularBench, TrainConfig, SCHEMA_VERSION,
};
use ntklab::bounds::ObjectiveParams;
use ntklab::linalg::norm;
use ntklab::metrics::{arch_seed, score_pool, MetricKind, MetricReport, ScoreConfig};
use ntklab::netcore::{mse, train_gd, Architecture, Dataset, InitScheme, ModelInstance};
use ntklab::rng;
use ntklab::searchspace::{ArchPool, CellArch, Op, Provenance};
use ntklab::Error;
use proptest::prelude::*;
use rand::Rng;

fn report(id: &str, m: f64, kappa: f64) -> MetricReport {
    MetricReport {
        arch_id: id.into(),
        grad: m,
        snip: m,
        grasp: m,
        trace_norm: m,
        kappa,
        lambda_min: 1.0,
        lambda_max: kappa,
        clamped: false,
        m: 16,
        seed: 0,
        failure: None,
    }
}

/// Reports over real pool IDs with spread-out metric values and κ.
fn spread_reports(n: usize, seed: u64) -> Vec<MetricReport> {
    let mut rng = rng::rng(seed);
    ArchPool::sample(n, seed)
        .unwrap()
        .ids()
        .iter()
        .map(|id| report(id, rng.random_range(0.5..4.0), 10f64.powf(rng.random_range(0.0..3.0))))
        .collect()
}

fn bench_from(reports: &[MetricReport], test: impl Fn(&MetricReport) -> f64) -> TabularBench {
    let entries: BTreeMap<String, BenchEntry> = reports
        .iter()
        .map(|r| {
            let t = test(r);
            (
                r.arch_id.clone(),
                BenchEntry {
                    val: Some(-t),
                    test: Some(t),
                    steps: 0,
                    flag: None,
                },
            )
        })
        .collect();
    TabularBench {
        schema_version: SCHEMA_VERSION,
        mode: BenchMode::Synthetic,
        seed: 0,
        dataset_fingerprint: "none".into(),
        config: None,
        entries,
    }
}

#[test]
fn teacher_splits_are_reproducible_and_in_contract() {
    let a = teacher_splits(6, 40, 20, 20, 3).unwrap();
    let b = teacher_splits(6, 40, 20, 20, 3).unwrap();
    for (x, y) in [(&a.train, &b.train), (&a.val, &b.val), (&a.test, &b.test)] {
        assert_eq!(x.inputs(), y.inputs());
        assert_eq!(x.labels(), y.labels());
    }
    for ds in [&a.train, &a.val, &a.test] {
        assert!(ds.inputs().iter().all(|x| norm(x) <= 1.0));
        assert!(ds.labels().iter().all(|y| (0.0..=1.0).contains(y)));
    }
    let lo = a.train.labels().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = a.train.labels().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!((lo, hi), (0.0, 1.0));
    let c = teacher_splits(6, 40, 20, 20, 4).unwrap();
    assert_ne!(a.train.inputs(), c.train.inputs());
    assert!(teacher_splits(6, 0, 20, 20, 3).is_err());
    assert!(teacher_splits(0, 4, 4, 4, 3).is_err());
}

#[test]
fn zero_step_bench_records_initial_validation_loss() {
    let splits = teacher_splits(4, 16, 8, 8, 1).unwrap();
    let pool = ArchPool::sample(1, 2).unwrap();
    let cfg = TrainConfig {
        width: 8,
        steps: 0,
        ..Default::default()
    };
    let bench = build_bench(&pool, &splits, &cfg, 5).unwrap();
    let id = &pool.ids()[0];
    let model = ModelInstance::init(
        Architecture::Cell(pool.entries()[0]),
        8,
        4,
        InitScheme::Lecun,
        arch_seed(5, id),
    )
    .unwrap();
    let e = &bench.entries[id];
    assert_eq!(e.val, Some(-mse(&model, &splits.val).unwrap()));
    assert_eq!(e.test, Some(mse(&model, &splits.test).unwrap()));
    assert_eq!(bench.mode, BenchMode::Trained);
}

#[test]
fn rebuilt_bench_is_byte_identical() {
    let splits = teacher_splits(4, 16, 8, 8, 1).unwrap();
    let pool = ArchPool::sample(6, 3).unwrap();
    let cfg = TrainConfig {
        width: 8,
        steps: 20,
        ..Default::default()
    };
    let a = build_bench(&pool, &splits, &cfg, 9).unwrap();
    let serial = TrainConfig {
        parallel: false,
        ..cfg
    };
    let b = build_bench(&pool, &splits, &serial, 9).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(TabularBench::from_json(&a.to_json()).unwrap(), a);
}

#[test]
fn empty_pool_cannot_be_benched() {
    let splits = teacher_splits(4, 8, 4, 4, 1).unwrap();
    let empty = ArchPool::from_archs(vec![], Provenance::File);
    if let Ok(pool) = empty {
        assert!(build_bench(&pool, &splits, &TrainConfig::default(), 0).is_err());
    }
}

fn linear_splits(n0: usize, seed: u64) -> Splits {
    // Nonnegative inputs and a nonnegative unit direction keep labels in [0, 1].
    let mut rng = rng::rng(seed);
    let w: Vec<f64> = (0..n0).map(|_| rng.random_range(0.1..1.0)).collect();
    let wn = norm(&w);
    let mut make = |name: &str, m: usize| {
        let xs: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let v: Vec<f64> = (0..n0).map(|_| rng.random_range(0.0..1.0)).collect();
                let r = norm(&v) / rng.random_range(0.2..1.0);
                v.into_iter().map(|x| x / r).collect()
            })
            .collect();
        let ys = xs
            .iter()
            .map(|x| x.iter().zip(&w).map(|(a, b)| a * b / wn).sum())
            .collect();
        Dataset::new(name, xs, ys).unwrap()
    };
    Splits {
        train: make("lin-train", 32),
        val: make("lin-val", 16),
        test: make("lin-test", 16),
    }
}

#[test]
fn skip_only_cell_fits_linear_targets() {
    let splits = linear_splits(5, 2);
    let model = ModelInstance::init(CellArch::uniform(Op::Skip), 16, 5, InitScheme::Lecun, 3).unwrap();
    let cfg = TrainConfig::default();
    let before = mse(&model, &splits.test).unwrap();
    let lr = cfg.learning_rate(&model, &splits.train);
    let (trained, _) = train_gd(&model, &splits.train, lr, 500).unwrap();
    let after = mse(&trained, &splits.test).unwrap();
    assert!(after < 0.1 * before, "{after} vs {before}");
}

#[test]
fn noiseless_synth_bench_ranks_by_objective() {
    let reports = spread_reports(60, 1);
    let hidden = ObjectiveParams::new(0.05, 4.0).unwrap();
    let bench = synth_bench(&reports, "fp", MetricKind::Trace, &hidden, 0.0, 0).unwrap();
    let objective: Vec<f64> = reports
        .iter()
        .map(|r| r.kappa / r.trace_norm + 0.05 * (r.trace_norm.powi(2) - 4.0).powi(2))
        .collect();
    let (best_val_id, _) = bench.best_val().unwrap();
    let argmin = (0..reports.len())
        .min_by(|&a, &b| objective[a].total_cmp(&objective[b]))
        .unwrap();
    assert_eq!(best_val_id, reports[argmin].arch_id);
    let tests: Vec<f64> = reports.iter().map(|r| bench.entries[&r.arch_id].test.unwrap()).collect();
    let rho = spearman(&objective, &tests).unwrap();
    assert_eq!(rho, 1.0, "{rho}");
}

#[test]
fn small_noise_keeps_rank_agreement() {
    let n = 80;
    let mut rng = rng::rng(6);
    // κ/M alone with μ = 0: objectives spread over [1, 10].
    let reports: Vec<MetricReport> = ArchPool::sample(n, 6)
        .unwrap()
        .ids()
        .iter()
        .map(|id| report(id, 1.0, rng.random_range(1.0..10.0)))
        .collect();
    let hidden = ObjectiveParams::new(0.0, 1.0).unwrap();
    let bench = synth_bench(&reports, "fp", MetricKind::Trace, &hidden, 0.01, 3).unwrap();
    let objective: Vec<f64> = reports.iter().map(|r| r.kappa).collect();
    let tests: Vec<f64> = reports.iter().map(|r| bench.entries[&r.arch_id].test.unwrap()).collect();
    assert!(spearman(&objective, &tests).unwrap() >= 0.95);
    assert!(synth_bench(&reports, "fp", MetricKind::Trace, &hidden, -1.0, 3).is_err());
}

#[test]
fn synth_bench_ignores_report_order() {
    let mut reports = spread_reports(30, 2);
    let hidden = ObjectiveParams::new(0.1, 2.0).unwrap();
    let a = synth_bench(&reports, "fp", MetricKind::Trace, &hidden, 0.3, 1).unwrap();
    reports.reverse();
    let b = synth_bench(&reports, "fp", MetricKind::Trace, &hidden, 0.3, 1).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn reciprocal_metric_test_error_is_perfectly_ranked() {
    let reports = spread_reports(40, 3);
    let bench = bench_from(&reports, |r| 1.0 / r.trace_norm);
    let rep = correlate(&bench, &reports, Scenario::Realizable, None).unwrap();
    assert_eq!(rep.rows.len(), 4);
    for row in &rep.rows {
        assert_eq!(row.spearman, 1.0);
        assert_eq!(row.kendall, 1.0);
        assert_eq!(row.n, 40);
        assert!(row.pearson <= 1.0 && row.pearson > 0.99);
    }
}

#[test]
fn correlation_needs_overlap() {
    let reports = spread_reports(10, 4);
    let bench = bench_from(&reports[..2], |r| r.kappa);
    assert!(correlate(&bench, &reports, Scenario::Realizable, None).is_err());
}

#[test]
fn optimized_params_recover_kappa_ratio_ranking() {
    let reports = spread_reports(60, 5);
    let bench = bench_from(&reports, |r| r.kappa / r.trace_norm);
    let (searches, rep) = optimize_bound_params(&bench, &reports, 20, 0).unwrap();
    assert_eq!(searches.len(), 4);
    for row in &rep.rows {
        assert!(row.spearman >= 0.98, "{row:?}");
        assert_eq!(row.scenario, Scenario::Nonrealizable);
    }
}

#[test]
fn single_probe_optimization_returns_that_probe() {
    let reports = spread_reports(20, 6);
    let bench = bench_from(&reports, |r| r.kappa);
    let (searches, _) = optimize_bound_params(&bench, &reports, 1, 2).unwrap();
    for s in &searches {
        assert_eq!(s.probes.len(), 1);
        let rate = s.params.eta / (s.params.m as f64 * s.params.c);
        assert!((rate.log10() - s.probes[0].0).abs() < 1e-9);
    }
    assert!(optimize_bound_params(&bench, &reports, 0, 2).is_err());
}

fn tiny_trained_bench() -> (TabularBench, Splits) {
    let splits = teacher_splits(4, 16, 8, 8, 0).unwrap();
    let pool = ArchPool::sample(12, 1).unwrap();
    let cfg = TrainConfig {
        width: 8,
        steps: 30,
        ..Default::default()
    };
    (build_bench(&pool, &splits, &cfg, 0).unwrap(), splits)
}

#[test]
fn identical_metric_datasets_transfer_perfectly() {
    let (bench, splits) = tiny_trained_bench();
    let score = ScoreConfig {
        width: 8,
        ..Default::default()
    };
    let sets = vec![splits.train.clone(), splits.train.clone(), splits.train.clone()];
    let rep = transfer_experiment(&bench, &sets, &score, Scenario::Realizable, None).unwrap();
    for row in &rep.rows {
        assert_eq!(row.std, 0.0);
        assert_eq!(row.correlations.len(), 3);
    }
    let mut csv = Vec::new();
    rep.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("scenario,metric,datasets,mean,std\n"));
    assert_eq!(text.lines().count(), 5);
    assert!(transfer_experiment(&bench, &sets[..1], &score, Scenario::Realizable, None).is_err());
}

#[test]
fn near_duplicate_inputs_are_clamped_but_complete() {
    let (bench, splits) = tiny_trained_bench();
    let x = splits.train.input(0).to_vec();
    let dup: Vec<Vec<f64>> = (0..8)
        .map(|i| x.iter().map(|v| v * (1.0 - 1e-9 * i as f64)).collect())
        .collect();
    let adversarial = Dataset::new("dup", dup, vec![0.5; 8]).unwrap();
    let score = ScoreConfig {
        width: 8,
        ..Default::default()
    };
    let sets = vec![splits.train.clone(), adversarial];
    let rep = transfer_experiment(&bench, &sets, &score, Scenario::Realizable, None).unwrap();
    assert!(rep.rows.iter().all(|r| r.clamped[1] >= 1));
}

#[test]
fn schema_and_content_are_validated() {
    let reports = spread_reports(5, 7);
    let mut bench = bench_from(&reports, |r| r.kappa);
    bench.schema_version = 99;
    assert!(matches!(
        TabularBench::from_json(&bench.to_json()),
        Err(Error::Schema { found: 99, .. })
    ));
    let mut bench = bench_from(&reports, |r| r.kappa);
    bench.entries.insert(
        "not-an-arch".into(),
        BenchEntry {
            val: Some(0.0),
            test: Some(0.0),
            steps: 0,
            flag: None,
        },
    );
    assert!(TabularBench::from_json(&bench.to_json()).is_err());
}

#[test]
fn flagged_entries_serialize_without_scores() {
    let mut reports = spread_reports(4, 8);
    reports[0].failure = Some("nan".into());
    let hidden = ObjectiveParams::new(0.1, 1.0).unwrap();
    let bench = synth_bench(&reports, "fp", MetricKind::Trace, &hidden, 0.0, 0).unwrap();
    let e = &bench.entries[&reports[0].arch_id];
    assert!(e.is_flagged() && e.val.is_none());
    let json = bench.to_json();
    assert!(json.contains("\"val\": null"));
    assert_eq!(TabularBench::from_json(&json).unwrap(), bench);
    assert_eq!(bench.test_errors().count(), 3);
}

#[test]
fn kernels_are_scored_on_the_bench_pool() {
    let (bench, splits) = tiny_trained_bench();
    let reports = score_pool(&bench.pool().unwrap(), &splits.train, &ScoreConfig {
        width: 8,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(reports.len(), bench.entries.len());
    assert!(correlate(&bench, &reports, Scenario::Realizable, None).is_ok());
}

proptest! {
    #[test]
    fn rank_correlations_survive_increasing_transforms(
        pairs in prop::collection::vec((0.01f64..10.0, 0.01f64..10.0), 3..30),
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let tb: Vec<f64> = b.iter().map(|x| x.ln() * 3.0 + 1.0).collect();
        let ta: Vec<f64> = a.iter().map(|x| x.powi(3)).collect();
        if let (Ok(s), Ok(k)) = (spearman(&a, &b), kendall(&a, &b)) {
            prop_assert!((s - spearman(&ta, &tb).unwrap()).abs() < 1e-12);
            prop_assert!((k - kendall(&ta, &tb).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&s) && (-1.0..=1.0).contains(&k));
        }
    }
}
