use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {key}: {message}")]
    Config { key: String, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("insufficient pool: {set} has {available} sentences, {requested} requested")]
    InsufficientPool {
        set: &'static str,
        available: usize,
        requested: usize,
    },

    #[error("sentence has no dictionary mentions: {0}")]
    NoMentions(String),

    #[error(
        "replace strategy could not reach distinct entities: {distinct} distinct of {needed} needed after {attempts} resamples"
    )]
    DedupShortfall {
        needed: usize,
        distinct: usize,
        attempts: usize,
    },

    #[error("all tokens masked")]
    EmptySequence,

    #[error("rank-deficient covariance (smallest eigenvalue {min_eigenvalue:e}); reduce the embedding dimension before whitening")]
    RankDeficient { min_eigenvalue: f64 },

    #[error("non-finite loss at step {step}: sentence loss {sentence_loss}, entity loss {entity_loss}")]
    NonFiniteLoss {
        step: usize,
        sentence_loss: f64,
        entity_loss: f64,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
