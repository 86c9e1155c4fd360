use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the support of a density or map.
    #[error("domain error: {0}")]
    Domain(String),

    /// Portfolio input violated a data invariant. `row` is 1-based and
    /// counts the header line, so it matches what an editor shows.
    #[error("data error at row {row}: {message}")]
    DataRow { row: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite gradient at coordinate {index}")]
    NonFiniteGradient { index: usize },

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("insufficient draws: {0}")]
    InsufficientDraws(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
