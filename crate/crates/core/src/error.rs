use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("feature hierarchy contains a directed cycle through feature {0}")]
    CyclicHierarchy(usize),
    #[error("feature index {index} out of range for {len} features")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("line {line}, column {column}: value {value:?} is not 0 or 1")]
    NonBinaryValue {
        line: u64,
        column: usize,
        value: String,
    },
    #[error("header has no trailing `class` column")]
    MissingClassColumn,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("too few instances: {0}")]
    TooFewInstances(String),
    #[error("conditional mutual information undefined for an empty table without smoothing")]
    DegenerateDistribution,
    #[error("feature set is empty")]
    EmptyFeatureSet,
    #[error("edge ({0}, {1}) is not among the scored pairs")]
    UnknownEdge(usize, usize),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("GMean undefined: test set has no instances of class {0}")]
    UndefinedClassSide(u8),
    #[error("incomplete result table: {0}")]
    IncompleteTable(String),
    #[error("all methods have identical average ranks")]
    DegenerateRanks,
    #[error("method {0} does not support this operation")]
    WrongMethod(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
