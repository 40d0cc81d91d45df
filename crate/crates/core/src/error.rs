use thiserror::Error;

/// Errors surfaced by the simulator and its component modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("calibration target unreachable: {0}")]
    Unreachable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
