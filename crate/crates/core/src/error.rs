use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed row {row}: expected {expected} fields, found {found}")]
    MalformedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-numeric value {value:?} at row {row}, column {column}")]
    NonNumericValue {
        row: usize,
        column: usize,
        value: String,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("class column {index} out of range for {width} columns")]
    InvalidClassColumn { index: usize, width: usize },
    #[error("arity mismatch: {left} vs {right}")]
    ArityMismatch { left: usize, right: usize },
    #[error("dimension mismatch: matrix is {matrix}x{matrix}, record has {record} values")]
    DimensionMismatch { matrix: usize, record: usize },
    #[error("invalid group size k'={0}: must be at least 2")]
    InvalidGroupSize(usize),
    #[error("invalid cluster count k={k} for {records} records")]
    InvalidClusterCount { k: usize, records: usize },
    #[error("eigen-solver did not converge after {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },
    #[error("no rotation matrix available for singleton fallback")]
    NoFallbackAvailable,
    #[error("provenance map is required but missing")]
    ProvenanceMissing,
    #[error("invalid stream configuration: {0}")]
    InvalidStreamConfig(String),
    #[error("record source failed at chunk {chunk}: {message}")]
    SourceFailure { chunk: usize, message: String },
    #[error("FastICA did not converge for component(s) {components:?}")]
    NonConvergence { components: Vec<usize> },
    #[error("degenerate linear system: {0}")]
    DegenerateSystem(String),
    #[error("dataset has no class labels")]
    NoLabels,
    #[error("too few records: {records} records for {folds} folds")]
    TooFewRecords { records: usize, folds: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
