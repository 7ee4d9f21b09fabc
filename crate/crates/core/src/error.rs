use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model, policy, or run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation needs more observations than the caller supplied.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Malformed or inconsistent input data.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// A numerical solve failed (e.g. singular system).
    #[error("solver error: {0}")]
    Solver(String),

    /// Selection indices were unusable (e.g. all NaN).
    #[error("invalid index: {0}")]
    InvalidIndex(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
