use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value at step {step}: {what}")]
    NonFinite { step: usize, what: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("force kind `{0}` has no finite bound constant")]
    UnboundedForce(String),

    #[error("graph is disconnected")]
    Disconnected,

    #[error("eigenvalue iteration did not converge")]
    NoConvergence,

    #[error("missing recorded states: {0}")]
    MissingStates(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
