use crate::optim::GenerationTrace;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op} produced a non-finite value")]
    NonFinite { op: String },

    #[error("unknown word {0:?}")]
    UnknownWord(String),

    #[error("cannot parse caption {caption:?}: {reason}")]
    Parse { caption: String, reason: String },

    #[error("template {template} incompatible with scene: {reason}")]
    Template { template: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    /// Latent update produced a non-finite vector; carries the trace collected
    /// up to the failing iteration so callers can dump it.
    #[error("generation aborted at iteration {iteration}: {reason}")]
    Aborted {
        iteration: usize,
        reason: String,
        trace: Box<GenerationTrace>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
