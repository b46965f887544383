use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ntklab::bench::teacher_splits;
use ntklab::cli::{read_bench, read_reports, EXIT_CONFIG, EXIT_EVALUATOR};
use ntklab::hnas::{hnas_search_reports, HnasConfig};
use ntklab::metrics::{score_pool, ScoreConfig};
use ntklab::rng::derive_seed;
use ntklab::searchspace::ArchPool;
use serde_json::Value;
use tempfile::TempDir;

const SMALL_DATA: [&str; 7] = ["--synth", "--m-train", "16", "--m-val", "8", "--m-test", "8"];

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_ntklab"))
            .args(args)
            .env_remove("NTKLAB_SEED")
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    }

    fn pool(&self, name: &str, size: usize) -> String {
        let p = self.arg(name);
        self.ok(&["pool", "sample", "--size", &size.to_string(), "--out", &p]);
        p
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn with(head: &[&str], tail: &[&str]) -> Vec<String> {
    head.iter().chain(tail).map(|s| s.to_string()).collect()
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn help_lists_flags_with_defaults() {
    let sb = Sandbox::new();
    for (cmd, flags) in [
        (vec!["score"], vec!["--pool", "--width", "--batch", "--seed", "--jobs", "--out", "[default: 32]"]),
        (vec!["search"], vec!["--bench", "--live", "--budget", "--metric", "--method", "[default: 20]"]),
        (vec!["correlate"], vec!["--bench", "--reports", "--scenario", "--rate"]),
        (vec!["transfer"], vec!["--bench", "--synth-seeds", "[default: 0.0001]"]),
        (vec!["verify-topology"], vec!["--spec", "--seeds", "--trials", "[default: 2000]"]),
        (vec!["bench", "build"], vec!["--pool", "--steps", "[default: 200]"]),
        (vec!["bench", "synth"], vec!["--mu", "--nu", "--sigma"]),
        (vec!["pool", "sample"], vec!["--size", "--cells"]),
    ] {
        let mut args = cmd.clone();
        args.push("--help");
        let out = sb.run(&args);
        assert_eq!(code(&out), 0, "{cmd:?}");
        let text = String::from_utf8_lossy(&out.stdout);
        for f in flags {
            assert!(text.contains(f), "{cmd:?} help lacks {f}");
        }
    }
}

#[test]
fn unknown_flags_and_bad_config_exit_two() {
    let sb = Sandbox::new();
    assert_eq!(code(&sb.run(&["score", "--frobnicate"])), i32::from(EXIT_CONFIG));
    assert_eq!(code(&sb.run(&["score", "--pool", "missing.json", "--synth"])), i32::from(EXIT_CONFIG));
    let pool = sb.pool("pool.json", 3);
    assert_eq!(code(&sb.run(&["score", "--pool", &pool])), i32::from(EXIT_CONFIG));
    assert_eq!(code(&sb.run(&["verify-topology", "--spec", "4,2"])), i32::from(EXIT_CONFIG));
}

#[test]
fn seed_falls_back_to_environment() {
    let sb = Sandbox::new();
    let from_flag = sb.ok(&["pool", "sample", "--size", "6", "--seed", "7"]).stdout;
    let from_env = Command::new(env!("CARGO_BIN_EXE_ntklab"))
        .args(["pool", "sample", "--size", "6"])
        .env("NTKLAB_SEED", "7")
        .output()
        .unwrap()
        .stdout;
    assert_eq!(from_flag, from_env);
    let other = sb.ok(&["pool", "sample", "--size", "6", "--seed", "8"]).stdout;
    assert_ne!(from_flag, other);
}

#[test]
fn single_arch_pool_yields_one_record() {
    let sb = Sandbox::new();
    let pool = sb.pool("one.json", 1);
    let out = sb.ok(&strs(&with(&["score", "--pool", &pool, "--width", "8"], &SMALL_DATA)));
    let text = String::from_utf8(out.stdout).unwrap();
    let reports = read_reports(&text).unwrap();
    assert_eq!(reports.len(), 1);
    let header: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(header["config"]["width"], 8);
    assert_eq!(header["config"]["command"], "score");
}

#[test]
fn metric_only_output_matches_full_reports() {
    let sb = Sandbox::new();
    let pool = sb.pool("pool.json", 8);
    let base = with(&["score", "--pool", &pool, "--width", "8"], &SMALL_DATA);
    let full = read_reports(&String::from_utf8(sb.ok(&strs(&base)).stdout).unwrap()).unwrap();
    let mut only = base.clone();
    only.extend(["--metric-only".to_string(), "trace".to_string()]);
    let text = String::from_utf8(sb.ok(&strs(&only)).stdout).unwrap();
    let lines: Vec<Value> = text.lines().skip(1).map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), full.len());
    for (line, r) in lines.iter().zip(&full) {
        assert_eq!(line["arch_id"], r.arch_id.as_str());
        assert_eq!(line["trace"].as_f64().unwrap(), r.trace_norm);
        assert!(line.get("grad").is_none());
    }
    let mut csv = only.clone();
    csv.extend(["--format".to_string(), "csv".to_string()]);
    let text = String::from_utf8(sb.ok(&strs(&csv)).stdout).unwrap();
    assert!(text.starts_with("# {"));
    assert_eq!(text.lines().nth(1), Some("arch_id,trace"));
}

#[test]
fn repeated_runs_are_identical_and_leave_no_temp_files() {
    let sb = Sandbox::new();
    let pool = sb.pool("pool.json", 6);
    let out = sb.arg("scores.jsonl");
    let args = with(&["score", "--pool", &pool, "--width", "8", "--out", &out], &SMALL_DATA);
    sb.ok(&strs(&args));
    let first = std::fs::read(&out).unwrap();
    let mut serial = args.clone();
    serial.extend(["--jobs".to_string(), "1".to_string()]);
    sb.ok(&strs(&serial));
    assert_eq!(first, std::fs::read(&out).unwrap());
    let names: Vec<String> = std::fs::read_dir(sb.dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(names.iter().all(|n| !n.contains(".tmp-")), "{names:?}");
}

fn synth_bench(sb: &Sandbox, pool: &str, mu: &str, nu: &str, sigma: &str) -> String {
    let out = sb.arg("synth.json");
    sb.ok(&strs(&with(
        &["bench", "synth", "--pool", pool, "--width", "8", "--mu", mu, "--nu", nu, "--sigma", sigma, "--out", &out],
        &SMALL_DATA,
    )));
    out
}

fn trace_of(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn budget_one_writes_a_single_step() {
    let sb = Sandbox::new();
    let pool = sb.pool("pool.json", 10);
    let bench = synth_bench(&sb, &pool, "1", "1", "0");
    let out = sb.arg("trace.json");
    sb.ok(&strs(&with(
        &["search", "--bench", &bench, "--width", "8", "--budget", "1", "--out", &out],
        &SMALL_DATA,
    )));
    let t = trace_of(Path::new(&out));
    assert_eq!(t["kind"], "search_trace");
    assert_eq!(t["steps"].as_array().unwrap().len(), 1);
    assert_eq!(t["best_arch"], t["steps"][0]["arch"]);
}

#[test]
fn cli_search_reproduces_library_search() {
    let sb = Sandbox::new();
    let pool_path = sb.pool("pool.json", 30);
    let bench_path = sb.arg("bench.json");
    sb.ok(&strs(&with(
        &["bench", "build", "--pool", &pool_path, "--width", "8", "--steps", "15", "--out", &bench_path],
        &SMALL_DATA,
    )));
    let out = sb.arg("trace.json");
    sb.ok(&strs(&with(
        &["search", "--bench", &bench_path, "--width", "8", "--budget", "10", "--out", &out, "--seed", "5"],
        &SMALL_DATA,
    )));

    let bench = read_bench(Path::new(&bench_path)).unwrap();
    let pool = ArchPool::load(Path::new(&pool_path)).unwrap();
    assert_eq!(bench.ids().len(), pool.len());
    let train = teacher_splits(8, 16, 8, 8, derive_seed(5, "dataset")).unwrap().train;
    let score = ScoreConfig {
        width: 8,
        seed: 5,
        ..Default::default()
    };
    let reports = score_pool(&bench.pool().unwrap(), &train, &score).unwrap();
    let cfg = HnasConfig {
        budget: 10,
        seed: derive_seed(5, "search"),
        ..Default::default()
    };
    let mut eval = ntklab::bench::TabularEvaluator { bench: &bench };
    let lib = hnas_search_reports(&reports, &cfg, &mut eval).unwrap();
    let cli = trace_of(Path::new(&out));
    assert_eq!(cli["steps"], serde_json::to_value(&lib.steps).unwrap());
    assert_eq!(cli["best_arch"], lib.best_arch.as_str());
}

#[test]
fn noiseless_bench_correlates_perfectly() {
    let sb = Sandbox::new();
    let pool = sb.pool("pool.json", 20);
    // With μ = 0 the planted test error is κ/M, which a vanishing rate reproduces.
    let bench = synth_bench(&sb, &pool, "0", "1", "0");
    let out = sb.arg("corr.csv");
    sb.ok(&strs(&with(
        &["correlate", "--bench", &bench, "--width", "8", "--scenario", "nonrealizable", "--rate", "1e-12", "--out", &out],
        &SMALL_DATA,
    )));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("scenario,metric,spearman,kendall,pearson,n"));
    let trace_row = text.lines().find(|l| l.starts_with("nonrealizable,trace,")).unwrap();
    assert_eq!(trace_row.split(',').nth(2), Some("1"));
}

#[test]
fn evaluator_failures_exit_four() {
    let sb = Sandbox::new();
    let bench_pool = sb.pool("pool.json", 5);
    let bench = synth_bench(&sb, &bench_pool, "1", "1", "0");
    let other = sb.arg("other.json");
    sb.ok(&["pool", "enumerate", "--limit", "5", "--out", &other]);
    let out = sb.run(&["search", "--bench", &bench, "--pool", &other, "--method", "random", "--budget", "3"]);
    assert_eq!(code(&out), i32::from(EXIT_EVALUATOR));
}

#[test]
fn unknown_schema_is_rejected() {
    let sb = Sandbox::new();
    let pool = sb.pool("pool.json", 5);
    let bench = synth_bench(&sb, &pool, "1", "1", "0");
    let text = std::fs::read_to_string(&bench).unwrap();
    let bumped = text.replacen("\"schema_version\": 1", "\"schema_version\": 99", 1);
    assert_ne!(text, bumped);
    std::fs::write(&bench, bumped).unwrap();
    let out = sb.run(&["search", "--bench", &bench, "--method", "random", "--budget", "2"]);
    assert_eq!(code(&out), i32::from(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));
}

#[test]
fn verify_topology_passes_and_reports() {
    let sb = Sandbox::new();
    let out = sb.ok(&["verify-topology", "--seeds", "3", "--trials", "50", "--format", "json"]);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["wide_identity_holds"], true);
    assert_eq!(doc["rows"].as_array().unwrap().len(), 4);
    assert_eq!(doc["config"]["trials"], 50);
}
