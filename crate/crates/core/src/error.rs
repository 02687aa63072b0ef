use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no recipients")]
    NoRecipients,

    #[error("observation dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("cluster has no members")]
    EmptyCluster,

    #[error("unknown robot {0}")]
    UnknownRobot(u32),

    #[error("invalid deposit quota {num}/{den}: must lie in (0, 1]")]
    InvalidQuota { num: u64, den: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("chain is not contiguous: expected block {expected}, found {found}")]
    NonContiguousChain { expected: u64, found: u64 },

    #[error("cannot average an empty set of reports")]
    EmptyReports,

    #[error("malformed record at line {line}: {reason}")]
    Malformed { line: usize, reason: String },

    #[error("state digest mismatch: node {robot} has {node}, replay has {replay}")]
    DigestMismatch {
        robot: u32,
        node: String,
        replay: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
