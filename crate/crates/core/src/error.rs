use thiserror::Error;

/// Errors raised by the library. Each variant maps to a stable FFI code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("index {index} out of range (length {len})")]
    OutOfRange { index: usize, len: usize },
    #[error("degenerate step at index {0}: step must lie strictly inside (0,1)")]
    DegenerateStep(usize),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("Cesaro order {0} is a pole of the coefficient")]
    CesaroPole(f64),
    #[error("undefined bandwidth: {0}")]
    UndefinedBandwidth(String),
    #[error("infinite estimate: {0}")]
    InfiniteEstimate(String),
    #[error("config error at key `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
