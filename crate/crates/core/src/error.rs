use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{source_name}:{line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },

    #[error("graph `{id}`: {msg}")]
    InvalidGraph { id: String, msg: String },

    #[error("pattern `{key}` reported with length {new} but previously {existing}")]
    LengthConflict {
        key: String,
        existing: usize,
        new: usize,
    },

    #[error("non-finite loss for relation `{relation}` at epoch {epoch}, example {example}")]
    NonFiniteLoss {
        relation: String,
        epoch: usize,
        example: usize,
    },

    #[error("unknown graph ids: {}", .0.join(", "))]
    UnknownGraphs(Vec<String>),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        source_name: impl Into<String>,
        line: usize,
        msg: impl Into<String>,
    ) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            msg: msg.into(),
        }
    }

    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
