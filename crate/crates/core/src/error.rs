use std::path::PathBuf;

/// Errors produced while loading corpora or running an analysis.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A record or manifest violates one of its invariants.
    #[error("validation failed{}: {message}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    Validation {
        context: Option<String>,
        message: String,
    },

    #[error("length mismatch in {what}: expected {expected}, found {found}")]
    LengthMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("duplicate run key (arch={arch}, config_id={config_id}, seed={seed})")]
    DuplicateRun {
        arch: String,
        config_id: String,
        seed: i64,
    },

    /// The inputs do not satisfy the preconditions of the requested analysis.
    #[error("{0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn validation(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            context: Some(context.into()),
            message: message.into(),
        }
    }

    /// Short machine-readable tag, used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::DuplicateRun { .. } => "duplicate_run",
            Error::InvalidInput(_) => "invalid_input",
            Error::Numerical(_) => "numerical",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
