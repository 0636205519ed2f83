use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file (ARFF/CSV header or data row).
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Attribute of a kind the toolkit does not handle.
    #[error("attribute '{name}': {kind} attributes are not supported, expected numeric")]
    UnsupportedAttribute { name: String, kind: String },

    /// Inconsistent configuration (target designation, protocol, paths).
    #[error("configuration error: {0}")]
    Config(String),

    /// Imputation cannot proceed: the column has no observed values.
    #[error("attribute '{name}' has no non-missing values to impute from")]
    AllMissing { name: String },

    /// Invalid algorithm parameter (r, k, folds, learning rate, ...).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Matrix/vector shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Least-squares system has numerical rank below the number of unknowns.
    #[error("{matrix} is numerically rank-deficient (rank < {columns})")]
    RankDeficient { matrix: String, columns: usize },

    /// RRMSE denominator is zero: actuals all equal the training mean.
    #[error("RRMSE undefined: test values all equal the training mean")]
    DegenerateRrmse,

    /// Per-target variant of [`Error::DegenerateRrmse`], carrying the index.
    #[error("target {target} is degenerate: test values all equal the training mean")]
    DegenerateTarget { target: usize },

    /// Statistical test precondition violated.
    #[error("statistics error: {0}")]
    Stats(String),

    /// Serialized model or bundle is malformed.
    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
