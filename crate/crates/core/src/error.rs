use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("dimension mismatch: expected {expected} features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("singular covariance for class {class}: regularised covariance is not positive definite")]
    SingularCovariance { class: u32 },

    #[error("degenerate decision rule: {0}")]
    DegenerateRule(String),

    #[error("labels are required for this operation")]
    MissingLabels,

    #[error("expected binary labels, found {0} classes")]
    NotBinary(usize),

    #[error("class {class} has {count} samples, need at least {needed}")]
    ClassTooSmall { class: String, count: usize, needed: usize },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("tree {tree} node {node} has no cover count")]
    MissingCover { tree: usize, node: usize },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("unknown class label {label:?} at row {row}")]
    UnknownLabel { label: String, row: usize },

    #[error("axis is not strictly increasing at column {0}")]
    NonMonotoneAxis(usize),

    #[error("a wavelength axis is required for this operation")]
    MissingAxis,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error comes from malformed or inconsistent input data.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::UnknownLabel { .. }
            | Error::NonMonotoneAxis(_)
            | Error::MissingAxis
            | Error::MissingLabels
            | Error::ClassTooSmall { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Empty(_) => true,
            Error::Fold { source, .. } => source.is_data_error(),
            _ => false,
        }
    }

    /// Whether the error is a numerical failure (factorisation, non-finite values).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::SingularCovariance { .. } | Error::Numerical(_) => true,
            Error::Fold { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
