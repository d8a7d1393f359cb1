use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure mode surfaced by the estimators, tests and pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("window [{start}, {end}) out of range for series of length {len}")]
    Bounds {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("undefined entropy: {0}")]
    UndefinedEntropy(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("calibration failed: only {populated} populated bins (need {required})")]
    CalibrationFailure { populated: usize, required: usize },

    #[error("gaussian correlation {value} outside calibrated support [{low}, {high}]")]
    Extrapolation { value: f64, low: f64, high: f64 },

    #[error("integration error: {0}")]
    Integration(String),

    #[error("test invalid: estimator failed on {failed} of {total} surrogates")]
    TestInvalid { failed: usize, total: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
