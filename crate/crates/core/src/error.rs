use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SciError> = std::result::Result<T, E>;

/// Failure modes shared by every module of the toolkit.
#[derive(Debug, Error)]
pub enum SciError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("capacity exceeded for {what}: {requested} elements requested, limit is {limit}")]
    Capacity {
        what: &'static str,
        requested: u128,
        limit: u128,
    },

    #[error("singular operator: {count} measurement pixel(s) receive zero mask energy")]
    SingularOperator { count: usize },

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SciError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SciError::InvalidArgument(msg.into())
    }

    pub(crate) fn mismatch(msg: impl Into<String>) -> Self {
        SciError::DimensionMismatch(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        SciError::Format {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SciError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 format/io, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            SciError::InvalidArgument(_)
            | SciError::DimensionMismatch(_)
            | SciError::Capacity { .. }
            | SciError::Unsupported(_) => 1,
            SciError::Format { .. } | SciError::Io { .. } => 2,
            SciError::SingularOperator { .. } | SciError::Decomposition(_) => 3,
        }
    }
}
