use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or unknown tag.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input whose shape, channel count or contents violate an operation's contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Training data that cannot be used together.
    #[error("invalid dataset: {0}")]
    Dataset(String),
    /// Malformed or unsupported file contents.
    #[error("format error: {0}")]
    Format(String),
    /// A required external backend could not be reached or failed.
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::Error::InvalidInput(format!($($arg)*))
    };
}
pub(crate) use invalid;
