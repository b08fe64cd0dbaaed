use std::io;

use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed caller input: out-of-range token ids, wrong lengths, empty sets.
    #[error("invalid input: {0}")]
    Input(String),

    /// An opaque model state was supplied for a prefix it does not cover.
    #[error("state mismatch: {0}")]
    State(String),

    /// A hyperparameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Cosine similarity is undefined for a zero-norm embedding.
    #[error("degenerate embedding: zero norm")]
    DegenerateEmbedding,

    /// A metric has no defined value for the given inputs.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A toy model could not be built from the given parameters.
    #[error("model construction failed: {0}")]
    Construction(String),

    /// A peer violated the logit-server wire protocol.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// The remote side answered with an explicit error message.
    #[error("remote error [{code}]: {message}")]
    Remote { code: String, message: String },

    /// An entailment or embedding oracle failed.
    #[error("oracle failure: {0}")]
    Oracle(String),

    /// A run manifest is missing a field or holds an invalid value.
    #[error("manifest error in `{field}`: {message}")]
    Manifest { field: String, message: String },

    /// A file did not match its documented format.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn manifest(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Manifest {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Stable machine-readable category, used as the prefix of CLI error lines.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::State(_) => "state",
            Error::Parameter(_) => "parameter",
            Error::DegenerateEmbedding => "degenerate-embedding",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::Construction(_) => "construction",
            Error::Protocol(_) => "protocol",
            Error::Remote { .. } => "remote",
            Error::Oracle(_) => "oracle",
            Error::Manifest { .. } => "manifest",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }

    /// True for errors caused by bad user-supplied configuration rather than runtime failures.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Manifest { .. } | Error::Parameter(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
