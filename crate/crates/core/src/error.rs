use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("capture contains no samples")]
    EmptyCapture,
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("signal of {signal_len} samples is shorter than the invariance scale {scale}")]
    Scale { signal_len: usize, scale: usize },
    #[error("invalid data: {0}")]
    Data(String),
    #[error("order selection failed: {0}")]
    Selection(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("not enough points: {0}")]
    Size(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid matrix: {0}")]
    Matrix(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("sequence of {got} bits is too short for the {test} test (needs {needed})")]
    Length { test: &'static str, needed: usize, got: usize },
    #[error("invalid test parameter: {0}")]
    Param(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed container: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
