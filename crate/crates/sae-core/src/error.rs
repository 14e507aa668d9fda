//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix had a different length/shape than the consumer expected.
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An operation was called with the wrong task kind (classification vs regression).
    #[error("task mismatch: {0}")]
    TaskMismatch(String),

    /// Non-finite value encountered during numeric evaluation.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Training loss became non-finite; carries the epoch at which it happened.
    #[error("non-finite loss at epoch {epoch}{}", member_context(.chain, .member))]
    NonFiniteLoss {
        epoch: usize,
        chain: Option<usize>,
        member: Option<usize>,
    },

    #[error("budget too small: {0}")]
    BudgetTooSmall(String),

    #[error("ensemble has no members")]
    EmptyEnsemble,

    /// Grid quadrature is limited to small parameter counts.
    #[error(
        "grid posterior supports at most {max} parameters, got {count}; \
         use the closed-form linear posterior for linear-Gaussian models"
    )]
    GridTooLarge { count: usize, max: usize },

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    /// Malformed on-disk artifact (ensemble file, report, predictive export).
    #[error("bad file format: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn member_context(chain: &Option<usize>, member: &Option<usize>) -> String {
    match (chain, member) {
        (Some(c), Some(m)) => format!(" (chain {c}, member {m})"),
        (None, Some(m)) => format!(" (member {m})"),
        _ => String::new(),
    }
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 numeric, 4 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DimensionMismatch { .. }
            | Error::InvalidArchitecture(_)
            | Error::InvalidConfig(_)
            | Error::TaskMismatch(_)
            | Error::BudgetTooSmall(_)
            | Error::EmptyEnsemble
            | Error::GridTooLarge { .. } => 2,
            Error::NonFinite(_) | Error::NonFiniteLoss { .. } => 3,
            Error::Parse { .. } | Error::Format(_) | Error::Io(_) => 4,
        }
    }

    /// Short machine-parsable kind tag used in CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::InvalidArchitecture(_) => "invalid-architecture",
            Error::InvalidConfig(_) => "invalid-config",
            Error::TaskMismatch(_) => "task-mismatch",
            Error::NonFinite(_) => "non-finite",
            Error::NonFiniteLoss { .. } => "non-finite-loss",
            Error::BudgetTooSmall(_) => "budget-too-small",
            Error::EmptyEnsemble => "empty-ensemble",
            Error::GridTooLarge { .. } => "grid-too-large",
            Error::Parse { .. } => "parse-error",
            Error::Format(_) => "bad-format",
            Error::Io(_) => "io-error",
        }
    }
}
