use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("non-finite gradient in slot `{slot}`")]
    NonFiniteGradient { slot: String },

    #[error("non-finite loss in batch {batch} of epoch {epoch} (mean of finite pairs so far: {partial})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        partial: f64,
    },

    #[error("cannot encode an empty token sequence")]
    EmptySequence,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("incompatible artifacts: {0}")]
    Mismatch(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },

    #[error("bundle: {0}")]
    Bundle(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
