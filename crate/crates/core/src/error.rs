use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    Format(String),

    #[error("unsupported codec: {0}")]
    UnsupportedCodec(String),

    #[error("input too short: {0}")]
    TooShort(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("label sequence cannot be emitted: {0}")]
    InfeasibleLabel(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("enumeration too large: {0}")]
    TooLarge(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: String,
        message: String,
    },

    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),

    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    /// Process exit code: 1 = usage, 2 = data, 3 = numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::InfeasibleLabel(_) | Error::NonFinite(_) | Error::Dimension(_) | Error::TooLarge(_) => 3,
            _ => 2,
        }
    }
}
