//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor shapes for an operation.
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// An argument violated an operation's preconditions.
    #[error("invalid argument to {op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    /// An operation would have produced (or observed) NaN/Inf.
    #[error("non-finite value in {op}: {detail}")]
    NonFinite { op: &'static str, detail: String },

    /// Training diverged; the path of the last good checkpoint is carried
    /// when one was written before the failure.
    #[error("training diverged at stage {stage} iteration {iteration}{}",
        last_good.as_ref().map(|p| format!(" (last good checkpoint: {p})")).unwrap_or_default())]
    Diverged {
        stage: u8,
        iteration: usize,
        last_good: Option<String>,
    },

    /// A rollout produced a non-finite latent; carries the failing window.
    #[error("non-finite latent during rollout at clip window {window}")]
    RolloutNonFinite { window: usize },

    /// A required earlier artifact (checkpoint, trained autoencoder) is absent.
    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    /// Malformed or incompatible serialized data.
    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
