use thiserror::Error;

use crate::hnas::SearchTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("requested {requested} architectures but the space holds only {available}")]
    PoolTooLarge { requested: usize, available: usize },

    #[error("numeric failure in {arch}: {detail}")]
    NumericFailure { arch: String, detail: String },

    #[error("training diverged at step {step} (loss {loss})")]
    Divergence { step: usize, loss: f64 },

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("Cholesky factorization failed even with jitter {jitter:e}")]
    Cholesky { jitter: f64 },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("rank deficient input: column {column} is linearly dependent")]
    RankDeficient { column: usize },

    #[error("evaluator failed on {arch}: {detail}")]
    Evaluator {
        arch: String,
        detail: String,
        partial: Option<Box<SearchTrace>>,
    },

    #[error("unsupported schema version {found} (expected major {expected})")]
    Schema { found: u32, expected: u32 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by the numbers rather than the configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NumericFailure { .. }
                | Error::Divergence { .. }
                | Error::NoConvergence { .. }
                | Error::Singular(_)
                | Error::Cholesky { .. }
                | Error::UndefinedCorrelation(_)
        )
    }
}
