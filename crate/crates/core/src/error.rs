use std::io;
use std::path::Path;

use thiserror::Error;

use crate::topology::TopologyError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid topology: {0}")]
    Topology(#[from] TopologyError),

    #[error("backend error for frames {seq_ids:?}: {message}")]
    Backend {
        seq_ids: Vec<u64>,
        message: String,
        #[source]
        cause: Option<Box<Error>>,
    },

    #[error("graph error: {0}")]
    Graph(String),

    #[error("channel closed")]
    ChannelClosed,

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },

    #[error("operator `{operator}` failed: {cause}")]
    Operator {
        operator: String,
        #[source]
        cause: Box<Error>,
    },

    #[error("operator `{operator}` panicked: {message}")]
    Panic { operator: String, message: String },

    #[error("watchdog expired after {0:?}")]
    Watchdog(std::time::Duration),
}

impl Error {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn io_path(path: &Path, source: io::Error) -> Self {
        Error::io(path.display().to_string(), source)
    }

    pub fn backend(seq_ids: impl Into<Vec<u64>>, message: impl Into<String>) -> Self {
        Error::Backend {
            seq_ids: seq_ids.into(),
            message: message.into(),
            cause: None,
        }
    }

    /// Wrap any error as the cause of a backend failure for `seq_ids`.
    pub fn into_backend(self, seq_ids: impl Into<Vec<u64>>) -> Self {
        match self {
            e @ Error::Backend { .. } => e,
            other => Error::Backend {
                seq_ids: seq_ids.into(),
                message: other.to_string(),
                cause: Some(Box::new(other)),
            },
        }
    }

    /// Name of the operator that failed, when this error came out of a pipeline run.
    pub fn operator(&self) -> Option<&str> {
        match self {
            Error::Operator { operator, .. } | Error::Panic { operator, .. } => Some(operator),
            _ => None,
        }
    }
}
