use thiserror::Error;

use crate::types::PointId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: metric expects {expected}, point has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix index {index} out of range for {n} points")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("location kind does not match the metric")]
    LocationKind,
    #[error("invalid distance matrix: {0}")]
    InvalidMatrix(String),
    #[error("center set is empty")]
    EmptyCenters,
    #[error("input point set is empty")]
    EmptyInput,
    #[error("coreset is empty")]
    EmptyCoreset,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("invalid weight {weight} for point {id}")]
    InvalidWeight { id: PointId, weight: f64 },
    #[error("duplicate point id {0}")]
    DuplicateId(PointId),
    #[error("unknown point id {0}")]
    UnknownId(PointId),
    #[error("epoch update budget exhausted")]
    NeedsNewEpoch,
    #[error("instance too large for exhaustive search: {combinations} center subsets")]
    InstanceTooLarge { combinations: u128 },
    #[error("sample size {n_c} exceeds group size {size}")]
    SampleTooLarge { n_c: usize, size: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("op {index} (line {line}): {source}")]
    AtOp {
        index: usize,
        line: usize,
        source: Box<Error>,
    },
    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// Whether the error comes from the input data rather than from how the
    /// library was called.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::InvalidParams(_) => false,
            Error::AtOp { source, .. } => source.is_data_error(),
            _ => true,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
