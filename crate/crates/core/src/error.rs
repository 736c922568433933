//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by susceptibility-modeling operations.
///
/// Variants carry enough context (factor names, row/column positions, class
/// labels) that a message alone identifies the offending input.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent tabular input.
    #[error("invalid table: {0}")]
    InvalidTable(String),

    /// A cell failed to parse or was non-finite.
    #[error("bad cell at row {row}, column \"{column}\": {reason}")]
    BadCell {
        row: usize,
        column: String,
        reason: String,
    },

    /// A requested factor does not exist in the table.
    #[error("unknown factor \"{0}\"")]
    UnknownFactor(String),

    /// Binning could not be constructed or applied.
    #[error("binning error for factor \"{factor}\": {reason}")]
    Binning { factor: String, reason: String },

    /// Negative sampling could not satisfy the request.
    #[error("negative sampling: requested {requested} points but only {eligible} grid cells satisfy the distance constraint")]
    NotEnoughEligibleCells { requested: usize, eligible: usize },

    /// Invalid argument outside the more specific variants.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A weight lookup hit a class with no defined weight.
    #[error("undefined weight for factor \"{factor}\", class \"{class}\": {reason}")]
    UndefinedWeight {
        factor: String,
        class: String,
        reason: String,
    },

    /// Numerically singular linear system.
    #[error("singular design matrix: column {column} ({name}) is linearly dependent on earlier columns")]
    SingularDesign { column: usize, name: String },

    /// Labels missing or not binary.
    #[error("label error: {0}")]
    Labels(String),

    /// Model input dimensionality mismatch.
    #[error("dimension mismatch: model expects {expected} factors, sample has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// Model (de)serialization failure.
    #[error("model serialization: {0}")]
    ModelFormat(String),

    /// Raster parsing/validation failure.
    #[error("raster error{}: {reason}", path.as_ref().map(|p| format!(" in {p}")).unwrap_or_default())]
    Raster {
        path: Option<String>,
        reason: String,
    },

    /// Filesystem error with the path that failed.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// CSV-level parse failure.
    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// Shorthand for [`Error::Io`] with a displayable path.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
