use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row} has {found} fields, header has {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("table is empty")]
    EmptyTable,
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("long-tail domain violation: value {value} with lower bound {lower}")]
    LongTailDomain { value: f64, lower: f64 },
    #[error("column `{column}`: unseen category `{token}`")]
    UnseenCategory { column: String, token: String },
    #[error("column `{column}`: expected a numeric value, found `{token}`")]
    NotNumeric { column: String, token: String },
    #[error("segment at offset {offset} is not a hard one-hot")]
    NotOneHot { offset: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("backward called before forward")]
    NoForwardCache,
    #[error("training diverged at epoch {epoch}: {what} is not finite")]
    Diverged { epoch: usize, what: String },
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("unsupported bundle version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("{0} not found")]
    NotFound(String),
}

impl Error {
    /// Whether the error stems from training itself rather than its inputs.
    pub fn is_training_failure(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. } | Error::NonFinite(_) | Error::NoForwardCache
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
