use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    /// A line-oriented text input could not be parsed.
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },

    /// A binary container is malformed.
    #[error("{0}")]
    Format(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("unknown id {0:?}")]
    MissingId(String),

    #[error("unmatched ids (first {}): {}", .0.len(), .0.join(", "))]
    UnmatchedIds(Vec<String>),

    #[error("non-finite value in {term}")]
    NonFinite { term: &'static str },

    #[error("training diverged at epoch {epoch}: {term} became non-finite")]
    Diverged { epoch: usize, term: &'static str },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn line(line: usize, msg: impl Into<String>) -> Self {
        Error::Line {
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
