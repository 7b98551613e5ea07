use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    DimMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    InvalidArg { op: &'static str, msg: String },

    #[error("tape: {0}")]
    Tape(String),

    #[error("model spec: {0}")]
    Spec(String),

    #[error("non-finite {loss} = {value} at iteration {iteration}")]
    NonFiniteLoss {
        iteration: u64,
        loss: &'static str,
        value: f64,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("config key `{key}` (line {line}): {msg}")]
    Config {
        key: String,
        line: usize,
        msg: String,
    },

    #[error("metric unavailable: {0}")]
    MetricUnavailable(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code class: 1 for usage/parse problems, 2 for runtime failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::DimMismatch { .. }
            | Error::InvalidArg { .. }
            | Error::Spec(_)
            | Error::Parse { .. }
            | Error::Config { .. } => 1,
            Error::Tape(_)
            | Error::NonFiniteLoss { .. }
            | Error::MetricUnavailable(_)
            | Error::Checkpoint(_)
            | Error::Io(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
