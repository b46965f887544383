//! The `ntklab` command line.
//!
//! Every output file starts with an echo of the settings that produced it:
//! a header line for JSON lines, `schema_version` and `config` fields for JSON
//! documents, and a `# {...}` comment line for CSV. Files are written to a
//! temporary sibling and renamed into place.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bench::{
    build_bench, correlate, make_dataset, optimize_bound_params, synth_bench, teacher_splits,
    transfer_experiment, CorrelationReport, DatasetKind, LiveEvaluator, Scenario, Splits,
    TabularBench, TabularEvaluator, TrainConfig,
};
use crate::bounds::{BoundParams, ObjectiveParams};
use crate::error::{Error, Result};
use crate::hnas::{
    hnas_search_reports, random_search, training_free_argmax, Evaluator, HnasConfig, SearchTrace,
};
use crate::metrics::{score_pool, MetricKind, MetricReport, ScoreConfig};
use crate::netcore::{Dataset, InitScheme};
use crate::rng::derive_seed;
use crate::searchspace::ArchPool;
use crate::topology::{topology_report, verify_wide, write_topology_csv, TopologySpec};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_EVALUATOR: u8 = 4;

/// Relative tolerance for the wide-kernel identity in `verify-topology`.
pub const WIDE_TOL: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "ntklab", version, about = "Training-free architecture search over empirical NTKs")]
pub struct Cli {
    /// Global seed; every random stream is derived from it.
    #[arg(long, global = true, env = "NTKLAB_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Maximum concurrent architecture evaluations (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute training-free metrics for every architecture in a pool.
    Score(ScoreArgs),
    /// Run the hybrid search (or a baseline) against a bench or live training.
    Search(SearchArgs),
    /// Correlate bound scores with a bench's test errors.
    Correlate(CorrelateArgs),
    /// Spread of bound-score correlations when metrics come from other datasets.
    Transfer(TransferArgs),
    /// Check the wide/deep linear-topology kernel identities.
    VerifyTopology(TopologyArgs),
    /// Build tabular benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Create architecture pool files.
    #[command(subcommand)]
    Pool(PoolCommand),
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Train every pool member and record validation and test errors.
    Build(BenchBuildArgs),
    /// Plant validation and test scores from the search objective.
    Synth(BenchSynthArgs),
}

#[derive(Debug, Subcommand)]
pub enum PoolCommand {
    /// Uniformly sample distinct cells.
    Sample(PoolSampleArgs),
    /// The first cells in enumeration order.
    Enumerate(PoolEnumerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricArg {
    Grad,
    Snip,
    Grasp,
    Trace,
}

impl From<MetricArg> for MetricKind {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Grad => MetricKind::Grad,
            MetricArg::Snip => MetricKind::Snip,
            MetricArg::Grasp => MetricKind::Grasp,
            MetricArg::Trace => MetricKind::Trace,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeArg {
    Lecun,
    Xavier,
    He,
}

impl From<SchemeArg> for InitScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Lecun => InitScheme::Lecun,
            SchemeArg::Xavier => InitScheme::Xavier,
            SchemeArg::He => InitScheme::He,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioArg {
    Realizable,
    Nonrealizable,
    Both,
}

impl ScenarioArg {
    fn scenarios(self) -> Vec<Scenario> {
        match self {
            ScenarioArg::Realizable => vec![Scenario::Realizable],
            ScenarioArg::Nonrealizable => vec![Scenario::Nonrealizable],
            ScenarioArg::Both => vec![Scenario::Realizable, Scenario::Nonrealizable],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Hnas,
    Random,
    Argmax,
}

/// Where datasets come from.
#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// CSV with header `x0,...,x{n0-1},y`.
    #[arg(long, conflicts_with = "synth")]
    pub data: Option<PathBuf>,
    /// Use the random-teacher regression task instead of a file.
    #[arg(long)]
    pub synth: bool,
    /// Input dimension of the teacher task.
    #[arg(long, default_value_t = 8)]
    pub n0: usize,
    #[arg(long, default_value_t = 64)]
    pub m_train: usize,
    #[arg(long, default_value_t = 32)]
    pub m_val: usize,
    #[arg(long, default_value_t = 32)]
    pub m_test: usize,
}

impl DataArgs {
    fn splits(&self, seed: u64) -> Result<Splits> {
        let data_seed = derive_seed(seed, "dataset");
        match (&self.data, self.synth) {
            (Some(path), _) => {
                let raw = Dataset::from_csv(path)?;
                make_dataset(
                    &DatasetKind::File(path.clone()),
                    raw.input_dim(),
                    self.m_train,
                    self.m_val,
                    self.m_test,
                    data_seed,
                )
            }
            (None, true) => teacher_splits(self.n0, self.m_train, self.m_val, self.m_test, data_seed),
            (None, false) => Err(Error::invalid("pass --data FILE or --synth")),
        }
    }
}

/// How pool members are instantiated for metric computation.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    /// Metric batch size m.
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, value_enum, default_value_t = SchemeArg::Lecun)]
    pub scheme: SchemeArg,
}

impl ModelArgs {
    fn score_config(&self, seed: u64) -> ScoreConfig {
        ScoreConfig {
            width: self.width,
            batch: self.batch,
            scheme: self.scheme.into(),
            seed,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScoreArgs {
    /// Pool file: a JSON array of cell encodings.
    #[arg(long)]
    pub pool: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Emit only this metric per architecture.
    #[arg(long, value_enum)]
    pub metric_only: Option<MetricArg>,
    /// `json` writes JSON lines.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file (stdout when omitted).
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SearchArgs {
    /// Pool file; defaults to the bench's architectures.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Tabular bench supplying validation scores.
    #[arg(long, conflicts_with = "live", required_unless_present = "live")]
    pub bench: Option<PathBuf>,
    /// Train candidates on demand instead of reading a bench.
    #[arg(long)]
    pub live: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = MetricArg::Trace)]
    pub metric: MetricArg,
    #[arg(long, default_value_t = 20)]
    pub budget: usize,
    #[arg(long, value_enum, default_value_t = Method::Hnas)]
    pub method: Method,
    /// Gradient-descent steps per architecture in live mode.
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub bench: PathBuf,
    /// Metric reports (JSON lines from `score`); recomputed from data when omitted.
    #[arg(long)]
    pub reports: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = ScenarioArg::Both)]
    pub scenario: ScenarioArg,
    /// Fixed rate η/(mc) for the non-realizable score; optimized when omitted.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Optimization budget for the non-realizable rate.
    #[arg(long, default_value_t = 20)]
    pub budget: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TransferArgs {
    #[arg(long)]
    pub bench: PathBuf,
    /// Metric datasets from files (repeatable).
    #[arg(long = "metric-data")]
    pub metric_data: Vec<PathBuf>,
    /// Teacher-task seeds for metric datasets (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub synth_seeds: Vec<u64>,
    #[arg(long, default_value_t = 8)]
    pub n0: usize,
    #[arg(long, default_value_t = 64)]
    pub m_train: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = ScenarioArg::Realizable)]
    pub scenario: ScenarioArg,
    /// Rate η/(mc) for the non-realizable score.
    #[arg(long, default_value_t = 1e-4)]
    pub rate: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TopologyArgs {
    /// `n,L,m` triples (repeatable).
    #[arg(long = "spec", value_parser = parse_spec, default_values = ["4,2,3", "8,3,4"])]
    pub specs: Vec<(usize, usize, usize)>,
    /// Seeds checked for the exact wide identity.
    #[arg(long, default_value_t = 50)]
    pub seeds: usize,
    /// Initializations averaged per report row.
    #[arg(long, default_value_t = 2000)]
    pub trials: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

fn parse_spec(s: &str) -> std::result::Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    let parse = |p: &str| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}"));
    match parts.as_slice() {
        [n, l, m] => Ok((parse(n)?, parse(l)?, parse(m)?)),
        _ => Err(format!("expected n,L,m, got {s:?}")),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchBuildArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, value_enum, default_value_t = SchemeArg::Lecun)]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchSynthArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = MetricArg::Trace)]
    pub metric: MetricArg,
    /// Hidden penalty weight.
    #[arg(long)]
    pub mu: f64,
    /// Hidden penalty target for M².
    #[arg(long)]
    pub nu: f64,
    /// Standard deviation of the Gaussian noise on both scores.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PoolSampleArgs {
    #[arg(long)]
    pub size: usize,
    #[arg(long, default_value_t = 1)]
    pub cells: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PoolEnumerateArgs {
    #[arg(long)]
    pub limit: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// Writes `bytes` to `path` via a temporary sibling and a rename, or to
/// stdout when no path is given.
pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    let Some(path) = path else {
        std::io::stdout().write_all(bytes)?;
        return Ok(());
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn config_echo(command: &str, seed: u64, args: &impl Serialize) -> Value {
    let mut v = serde_json::to_value(args).expect("arguments serialize");
    if let Value::Object(map) = &mut v {
        map.insert("command".into(), json!(command));
        map.insert("seed".into(), json!(seed));
    }
    v
}

fn csv_comment(config: &Value) -> String {
    format!("# {}\n", json!({ "schema_version": SCHEMA_VERSION, "config": config }))
}

/// JSON document with `schema_version`, `kind` and `config` ahead of `body`'s fields.
fn json_document(kind: &str, config: &Value, body: &impl Serialize) -> Vec<u8> {
    let mut doc = serde_json::Map::new();
    doc.insert("schema_version".into(), json!(SCHEMA_VERSION));
    doc.insert("kind".into(), json!(kind));
    doc.insert("config".into(), config.clone());
    match serde_json::to_value(body).expect("bodies serialize") {
        Value::Object(fields) => doc.extend(fields),
        other => {
            doc.insert("data".into(), other);
        }
    }
    let mut out = serde_json::to_vec_pretty(&Value::Object(doc)).expect("documents serialize");
    out.push(b'\n');
    out
}

fn check_schema(found: &Value) -> Result<()> {
    let version = found.as_u64().unwrap_or(0) as u32;
    if version != SCHEMA_VERSION {
        return Err(Error::Schema {
            found: version,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(())
}

fn fmt_opt(v: f64, ok: bool) -> String {
    if ok {
        v.to_string()
    } else {
        String::new()
    }
}

/// JSON lines (header then one object per architecture) or CSV.
pub fn render_reports(
    reports: &[MetricReport],
    config: &Value,
    format: Format,
    metric_only: Option<MetricKind>,
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match format {
        Format::Json => {
            let header = json!({
                "schema_version": SCHEMA_VERSION,
                "kind": "metric_reports",
                "config": config,
            });
            writeln!(out, "{header}")?;
            for r in reports {
                let line = match metric_only {
                    None => serde_json::to_string(r)?,
                    Some(k) => {
                        let mut obj = serde_json::Map::new();
                        obj.insert("arch_id".into(), json!(r.arch_id));
                        obj.insert(k.label().into(), if r.is_ok() { json!(r.value(k)) } else { Value::Null });
                        if let Some(f) = &r.failure {
                            obj.insert("failure".into(), json!(f));
                        }
                        Value::Object(obj).to_string()
                    }
                };
                writeln!(out, "{line}")?;
            }
        }
        Format::Csv => {
            out.extend(csv_comment(config).into_bytes());
            let mut w = csv::Writer::from_writer(&mut out);
            match metric_only {
                None => {
                    w.write_record(["arch_id", "grad", "snip", "grasp", "trace", "kappa", "clamped"])?;
                    for r in reports {
                        let ok = r.is_ok();
                        w.write_record([
                            r.arch_id.clone(),
                            fmt_opt(r.grad, ok),
                            fmt_opt(r.snip, ok),
                            fmt_opt(r.grasp, ok),
                            fmt_opt(r.trace_norm, ok),
                            fmt_opt(r.kappa, ok),
                            if ok { r.clamped.to_string() } else { String::new() },
                        ])?;
                    }
                }
                Some(k) => {
                    w.write_record(["arch_id", k.label()])?;
                    for r in reports {
                        w.write_record([r.arch_id.clone(), fmt_opt(r.value(k), r.is_ok())])?;
                    }
                }
            }
            w.flush()?;
        }
    }
    Ok(out)
}

/// Reads full metric reports written by `score --format json`.
pub fn read_reports(text: &str) -> Result<Vec<MetricReport>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Value = serde_json::from_str(
        lines
            .next()
            .ok_or_else(|| Error::invalid("empty report file"))?,
    )?;
    check_schema(&header["schema_version"])?;
    if header["kind"] != "metric_reports" {
        return Err(Error::invalid("not a metric report file"));
    }
    lines.map(|l| Ok(serde_json::from_str(l)?)).collect()
}

/// Reads a bench written either by the library or by `bench build/synth`.
pub fn read_bench(path: &Path) -> Result<TabularBench> {
    let mut doc: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    check_schema(&doc["schema_version"])?;
    if let Value::Object(map) = &mut doc {
        map.remove("kind");
    }
    let bench: TabularBench = serde_json::from_value(doc)?;
    bench.validate()?;
    Ok(bench)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Evaluator { .. } => EXIT_EVALUATOR,
        e if e.is_numeric() => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    ExitCode::from(run_code(args))
}

/// As [`run`], but returns the numeric code.
pub fn run_code<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: &Cli) -> Result<u8> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker threads: {e}")))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let seed = cli.seed;
    match &cli.command {
        Command::Score(a) => cmd_score(a, seed),
        Command::Search(a) => cmd_search(a, seed),
        Command::Correlate(a) => cmd_correlate(a, seed),
        Command::Transfer(a) => cmd_transfer(a, seed),
        Command::VerifyTopology(a) => cmd_verify_topology(a, seed),
        Command::Bench(BenchCommand::Build(a)) => cmd_bench_build(a, seed),
        Command::Bench(BenchCommand::Synth(a)) => cmd_bench_synth(a, seed),
        Command::Pool(PoolCommand::Sample(a)) => {
            let pool = ArchPool::sample_cells(a.size, a.cells, seed)?;
            write_output(a.out.as_deref(), format!("{}\n", pool.to_json()).as_bytes())?;
            Ok(0)
        }
        Command::Pool(PoolCommand::Enumerate(a)) => {
            let pool = ArchPool::enumerate(a.limit)?;
            write_output(a.out.as_deref(), format!("{}\n", pool.to_json()).as_bytes())?;
            Ok(0)
        }
    }
}

fn score_reports(pool: &ArchPool, data: &DataArgs, model: &ModelArgs, seed: u64) -> Result<(Vec<MetricReport>, Dataset)> {
    let splits = data.splits(seed)?;
    let reports = score_pool(pool, &splits.train, &model.score_config(seed))?;
    Ok((reports, splits.train))
}

fn cmd_score(a: &ScoreArgs, seed: u64) -> Result<u8> {
    let pool = ArchPool::load(&a.pool)?;
    let (reports, _) = score_reports(&pool, &a.data, &a.model, seed)?;
    if reports.iter().all(|r| !r.is_ok()) {
        return Err(Error::NumericFailure {
            arch: "<pool>".into(),
            detail: format!(
                "no architecture could be scored ({})",
                reports[0].failure.as_deref().unwrap_or("unknown")
            ),
        });
    }
    let config = config_echo("score", seed, a);
    let bytes = render_reports(&reports, &config, a.format, a.metric_only.map(Into::into))?;
    write_output(a.out.as_deref(), &bytes)?;
    let failed = reports.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        eprintln!("{failed} of {} architectures could not be scored", reports.len());
    }
    Ok(0)
}

fn write_trace(out: Option<&Path>, config: &Value, trace: &SearchTrace) -> Result<()> {
    write_output(out, &json_document("search_trace", config, trace))
}

fn cmd_search(a: &SearchArgs, seed: u64) -> Result<u8> {
    let bench = a.bench.as_deref().map(read_bench).transpose()?;
    let pool = match (&a.pool, &bench) {
        (Some(p), _) => ArchPool::load(p)?,
        (None, Some(b)) => b.pool()?,
        (None, None) => return Err(Error::invalid("live search needs --pool")),
    };
    // Random search over a bench never touches data.
    let needs_data = bench.is_none() || !matches!(a.method, Method::Random);
    let splits = if needs_data { Some(a.data.splits(seed)?) } else { None };
    let config = config_echo("search", seed, a);
    let train = TrainConfig {
        width: a.model.width,
        scheme: a.model.scheme.into(),
        steps: a.steps,
        ..TrainConfig::default()
    };
    let mut tabular;
    let mut live;
    let evaluator: &mut dyn Evaluator = match &bench {
        Some(b) => {
            tabular = TabularEvaluator { bench: b };
            &mut tabular
        }
        None => {
            live = LiveEvaluator {
                splits: splits.as_ref().expect("live search loads data"),
                config: train,
                seed,
            };
            &mut live
        }
    };
    let metric: MetricKind = a.metric.into();
    let result = match a.method {
        Method::Random => random_search(&pool.ids(), a.budget, derive_seed(seed, "search"), evaluator),
        _ => {
            let train = &splits.as_ref().expect("metric search loads data").train;
            let reports = score_pool(&pool, train, &a.model.score_config(seed))?;
            match a.method {
                Method::Argmax => training_free_argmax(&reports, metric, evaluator),
                _ => {
                    let hc = HnasConfig {
                        metric,
                        budget: a.budget,
                        seed: derive_seed(seed, "search"),
                        ..HnasConfig::default()
                    };
                    hnas_search_reports(&reports, &hc, evaluator)
                }
            }
        }
    };
    match result {
        Ok(trace) => {
            write_trace(a.out.as_deref(), &config, &trace)?;
            eprintln!("best {} val {} ({} evaluations)", trace.best_arch, trace.best_val, trace.evals);
            Ok(0)
        }
        Err(Error::Evaluator { arch, detail, partial }) => {
            if let (Some(out), Some(p)) = (&a.out, &partial) {
                let mut path = out.clone().into_os_string();
                path.push(".partial");
                write_trace(Some(Path::new(&path)), &config, p)?;
            }
            Err(Error::Evaluator { arch, detail, partial })
        }
        Err(e) => Err(e),
    }
}

fn metric_reports_for(
    reports: Option<&Path>,
    bench: &TabularBench,
    data: &DataArgs,
    model: &ModelArgs,
    seed: u64,
) -> Result<Vec<MetricReport>> {
    match reports {
        Some(p) => read_reports(&fs::read_to_string(p)?),
        None => Ok(score_reports(&bench.pool()?, data, model, seed)?.0),
    }
}

fn render_correlation(report: &CorrelationReport, config: &Value, format: Format) -> Result<Vec<u8>> {
    Ok(match format {
        Format::Json => json_document("correlation", config, report),
        Format::Csv => {
            let mut out = csv_comment(config).into_bytes();
            report.write_csv(&mut out)?;
            out
        }
    })
}

fn cmd_correlate(a: &CorrelateArgs, seed: u64) -> Result<u8> {
    let bench = read_bench(&a.bench)?;
    let reports = metric_reports_for(a.reports.as_deref(), &bench, &a.data, &a.model, seed)?;
    let mut rows = Vec::new();
    for scenario in a.scenario.scenarios() {
        let report = match (scenario, a.rate) {
            (Scenario::Realizable, _) => correlate(&bench, &reports, scenario, None)?,
            (Scenario::Nonrealizable, Some(rate)) => {
                let m = reports.iter().find(|r| r.is_ok()).map(|r| r.m).unwrap_or(1);
                let params = BoundParams::new(rate * m as f64, 1.0, 1, m)?;
                correlate(&bench, &reports, scenario, Some(&params))?
            }
            (Scenario::Nonrealizable, None) => {
                optimize_bound_params(&bench, &reports, a.budget, derive_seed(seed, "bound-params"))?.1
            }
        };
        rows.extend(report.rows);
    }
    let report = CorrelationReport { rows };
    for r in &report.rows {
        eprintln!(
            "{:<13} {:<5} spearman {:.4} kendall {:.4} pearson {:.4} n {}",
            r.scenario.label(),
            r.metric.label(),
            r.spearman,
            r.kendall,
            r.pearson,
            r.n
        );
    }
    let config = config_echo("correlate", seed, a);
    write_output(a.out.as_deref(), &render_correlation(&report, &config, a.format)?)?;
    Ok(0)
}

fn cmd_transfer(a: &TransferArgs, seed: u64) -> Result<u8> {
    let bench = read_bench(&a.bench)?;
    let mut datasets = Vec::new();
    for p in &a.metric_data {
        datasets.push(Dataset::from_csv(p)?);
    }
    for &s in &a.synth_seeds {
        let mut d = teacher_splits(a.n0, a.m_train, 1, 1, s)?.train;
        d.name = format!("teacher-s{s}");
        datasets.push(d);
    }
    let scenario = match a.scenario {
        ScenarioArg::Realizable => Scenario::Realizable,
        ScenarioArg::Nonrealizable => Scenario::Nonrealizable,
        ScenarioArg::Both => return Err(Error::invalid("transfer takes a single scenario")),
    };
    let params = BoundParams::new(a.rate * a.model.batch as f64, 1.0, 1, a.model.batch)?;
    let score = a.model.score_config(seed);
    let report = transfer_experiment(&bench, &datasets, &score, scenario, Some(&params))?;
    for r in &report.rows {
        eprintln!("{:<5} mean {:.4} std {:.4}", r.metric.label(), r.mean, r.std);
    }
    let config = config_echo("transfer", seed, a);
    let bytes = match a.format {
        Format::Json => json_document("transfer", &config, &report),
        Format::Csv => {
            let mut out = csv_comment(&config).into_bytes();
            report.write_csv(&mut out)?;
            out
        }
    };
    write_output(a.out.as_deref(), &bytes)?;
    Ok(0)
}

fn cmd_verify_topology(a: &TopologyArgs, seed: u64) -> Result<u8> {
    let mut specs = Vec::new();
    let mut holds = true;
    for &(n, layers, m) in &a.specs {
        let (rel, kappa_dev) = verify_wide(n, layers, m, seed, a.seeds)?;
        let ok = rel <= WIDE_TOL && kappa_dev <= WIDE_TOL;
        holds &= ok;
        eprintln!(
            "wide n={n} L={layers} m={m}: max relative deviation {rel:.3e}, max |κ-1| {kappa_dev:.3e} over {} seeds: {}",
            a.seeds,
            if ok { "ok" } else { "FAILED" }
        );
        specs.push(TopologySpec::new(n, layers, m, seed)?);
    }
    let rows = topology_report(&specs, a.trials)?;
    let config = config_echo("verify-topology", seed, a);
    let bytes = match a.format {
        Format::Json => json_document("topology", &config, &json!({ "wide_identity_holds": holds, "rows": rows })),
        Format::Csv => {
            let mut out = csv_comment(&config).into_bytes();
            write_topology_csv(&rows, &mut out)?;
            out
        }
    };
    write_output(a.out.as_deref(), &bytes)?;
    Ok(if holds { 0 } else { EXIT_NUMERIC })
}

fn cmd_bench_build(a: &BenchBuildArgs, seed: u64) -> Result<u8> {
    let pool = ArchPool::load(&a.pool)?;
    let splits = a.data.splits(seed)?;
    let train = TrainConfig {
        width: a.width,
        scheme: a.scheme.into(),
        steps: a.steps,
        ..TrainConfig::default()
    };
    let mut bench = build_bench(&pool, &splits, &train, seed)?;
    bench.config = Some(config_echo("bench build", seed, a));
    let flagged = bench.entries.values().filter(|e| e.is_flagged()).count();
    if flagged > 0 {
        eprintln!("{flagged} of {} architectures flagged", bench.entries.len());
    }
    write_output(a.out.as_deref(), format!("{}\n", bench.to_json()).as_bytes())?;
    Ok(0)
}

fn cmd_bench_synth(a: &BenchSynthArgs, seed: u64) -> Result<u8> {
    let pool = ArchPool::load(&a.pool)?;
    let (reports, train) = score_reports(&pool, &a.data, &a.model, seed)?;
    let hidden = ObjectiveParams::new(a.mu, a.nu)?;
    let mut bench = synth_bench(
        &reports,
        &train.fingerprint(),
        a.metric.into(),
        &hidden,
        a.sigma,
        derive_seed(seed, "synth-bench"),
    )?;
    bench.config = Some(config_echo("bench synth", seed, a));
    write_output(a.out.as_deref(), format!("{}\n", bench.to_json()).as_bytes())?;
    Ok(0)
}
