use thiserror::Error;

/// Errors raised by the link model, estimators and sweep driver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QkdError {
    /// An argument lies outside the domain of the model.
    #[error("domain error: {0}")]
    Domain(String),
    /// Bad preset, config file, table, or CLI option.
    #[error("configuration error: {0}")]
    Config(String),
    /// The operation was called with inputs its contract forbids.
    #[error("misuse: {0}")]
    Misuse(String),
    #[error("inconsistent observation: {0}")]
    InconsistentObservation(String),
    #[error("weak decoy intensity {mu} exceeds the weakness guard {guard}")]
    WeaknessViolation { mu: f64, guard: f64 },
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("no root: {0}")]
    NoRoot(String),
    #[error("no cutoff: {0}")]
    NoCutoff(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl QkdError {
    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            QkdError::Config(_) | QkdError::Misuse(_) => 2,
            QkdError::Io { .. } => 4,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl std::fmt::Display, err: std::io::Error) -> Self {
        QkdError::Io {
            path: path.to_string(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, QkdError>;
