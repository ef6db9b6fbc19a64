use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invalid snapshot at line {line}: {message}")]
    InvalidSnapshot { line: u64, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("column {column} has zero variance over the normalization window")]
    ZeroVariance { column: String },

    #[error("not enough prior days: need {needed}, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("index {index} out of range for series of length {len} with horizon {horizon}")]
    OutOfRange { index: usize, len: usize, horizon: usize },

    #[error("shape mismatch in layer `{layer}`: expected {expected}, found {found}")]
    Shape {
        layer: String,
        expected: String,
        found: String,
    },

    #[error("non-finite value in layer `{layer}`")]
    NonFinite { layer: String },

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid file format: {0}")]
    Format(String),

    #[error("predictions misaligned with snapshots: {0}")]
    Misaligned(String),

    #[error("illegal action: {0}")]
    IllegalAction(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
