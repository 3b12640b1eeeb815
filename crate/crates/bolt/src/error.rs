use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Variants map onto CLI exit codes:
/// usage/config problems -> 1, data problems -> 2, backend/transport -> 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("authentication error: {0}")]
    Auth(String),

    #[error("malformed backend response: {0}")]
    MalformedResponse(String),

    #[error("mock script has no entry for request {0}")]
    MockMiss(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit code this error maps to on the CLI surface.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Parse { .. } | Error::Data(_) | Error::Precondition(_) => 2,
            Error::Transport { .. }
            | Error::Auth(_)
            | Error::MalformedResponse(_)
            | Error::MockMiss(_) => 3,
            Error::Io(_) | Error::Json(_) => 2,
        }
    }
}
