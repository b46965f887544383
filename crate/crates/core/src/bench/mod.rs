//! Datasets, tabular benchmarks, rank correlations, and the correlation and
//! transfer experiments built on them.

mod correlation;
mod data;
mod experiments;
mod tabular;

pub use correlation::{average_ranks, kendall, pearson, spearman};
pub use data::{
    file_splits, make_dataset, teacher_splits, unit_ball_point, DatasetKind, Splits, Teacher,
    TEACHER_GAIN, TEACHER_HIDDEN,
};
pub use tabular::{
    build_bench, synth_bench, train_entry, BenchEntry, BenchMode, LiveEvaluator, TabularBench,
    TabularEvaluator, TrainConfig, SCHEMA_VERSION,
};
pub use experiments::{
    bound_params_for_rate, correlate, optimize_bound_params, transfer_experiment, BoundSearch,
    CorrelationReport, CorrelationRow, Scenario, TransferReport, TransferRow, LOG10_RATE_RANGE,
};
