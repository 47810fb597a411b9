use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the engine and its supporting modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bound undefined: {0}")]
    UndefinedBound(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("empty workload")]
    EmptyWorkload,

    #[error("kernel matrix is singular even after jitter {jitter:e}")]
    SingularKernel { jitter: f64 },

    #[error("unknown pair id {0}")]
    UnknownPair(u64),

    #[error("pair {0} already carries a human label")]
    AlreadyLabeled(u64),

    #[error("a label batch is already pending")]
    BatchPending,

    #[error("no label batch is pending")]
    NoPendingBatch,

    #[error("submitted labels do not match the pending batch: {0}")]
    LabelMismatch(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Stable machine-readable code used by the HTTP layer.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UndefinedBound(_) => "undefined_bound",
            Error::Config(_) => "invalid_config",
            Error::Io { .. } => "io_error",
            Error::Parse { .. } => "parse_error",
            Error::Schema(_) => "schema_mismatch",
            Error::EmptyWorkload => "empty_workload",
            Error::SingularKernel { .. } => "singular_kernel",
            Error::UnknownPair(_) => "unknown_pair",
            Error::AlreadyLabeled(_) => "already_labeled",
            Error::BatchPending => "batch_pending",
            Error::NoPendingBatch => "no_pending_batch",
            Error::LabelMismatch(_) => "label_mismatch",
        }
    }
}
