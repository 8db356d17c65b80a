use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown decider `{0}`")]
    UnknownDecider(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error("decider returned {got} runs, expected {expected} distinct indices below {k}")]
    BadDecision { got: usize, expected: usize, k: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than runtime failures.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::UnknownDecider(_) | Error::UnknownPreset(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
