use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed event at log position {position}: {reason}")]
    MalformedEvent { position: usize, reason: String },

    #[error("matrix is not positive definite even after jitter ({context})")]
    NotPositiveDefinite { context: &'static str },

    #[error("dense path limited to {limit} items, got {requested}")]
    DenseLimit { limit: usize, requested: usize },

    #[error("assortment search did not converge in {iterations} iterations; optimum bracketed by [{lo}, {hi}]")]
    SearchExhausted { iterations: usize, lo: f64, hi: f64 },

    #[error("MNL epoch exceeded {cap} rounds; some item parameter is too close to 0")]
    EpochRunaway { cap: u64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
