use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the estimators, designs and I/O helpers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("ragged rows: row {row} has {found} cells, expected {expected}")]
    RaggedRows {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("non-numeric cell {text:?} at row {row}, column {col}")]
    NonNumericCell { row: usize, col: usize, text: String },

    #[error("empty data: {0}")]
    Empty(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid bounds for input {index}: low {low} must be < high {high}")]
    InvalidBounds { index: usize, low: f64, high: f64 },

    #[error("invalid column selector: {0}")]
    InvalidSelector(String),

    #[error("zero bandwidth: all points coincide")]
    ZeroBandwidth,

    #[error("invalid bandwidth {0}")]
    InvalidBandwidth(f64),

    #[error("kernel kind mismatch: {0}")]
    KindMismatch(String),

    #[error("norm power alpha = {0} outside the admissible range")]
    BadAlpha(f64),

    #[error("invalid number of components: {0}")]
    InvalidComponents(String),

    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("invalid neighbor count k = {k} for n = {n}")]
    BadK { k: usize, n: usize },

    #[error("zero output variance")]
    ZeroVariance,

    #[error("invalid selection size m = {m} for p = {p}")]
    BadM { m: usize, p: usize },

    #[error("number of resamples must be at least 1")]
    BadB,

    #[error("dimension mismatch: expected {expected} columns, got {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("no reference indices available for {0}")]
    NoReference(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
