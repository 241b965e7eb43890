use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: file is empty (a header row of model labels is required)")]
    EmptyFile { path: PathBuf },

    #[error("line {line}: {reason}")]
    Header { line: usize, reason: String },

    #[error("line {line}: expected {expected} fields, found {found}")]
    RowLength {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}, column {column}: cannot parse {field:?} as a number")]
    NonNumeric {
        line: usize,
        column: usize,
        field: String,
    },

    #[error("line {line}, column {column}: non-finite value {field:?}")]
    NonFiniteField {
        line: usize,
        column: usize,
        field: String,
    },

    #[error("row has {found} entries but the matrix has {expected} models")]
    LengthMismatch { expected: usize, found: usize },

    #[error("entry {index} of the row is not finite ({value})")]
    NonFinite { index: usize, value: f64 },

    #[error("{what} {index} out of range (valid: {min}..={max})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        min: usize,
        max: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("singular design matrix: {0}")]
    Singular(String),

    #[error("{path} already exists (pass --force to overwrite)")]
    WouldOverwrite { path: PathBuf },

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Io(#[from] std::io::Error),
}
