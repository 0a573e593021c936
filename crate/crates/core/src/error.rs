use thiserror::Error;

/// Errors produced by the reconstruction engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mesh is not watertight: {open_edges} open edges")]
    NotWatertight { open_edges: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("object out of view")]
    OutOfView,

    #[error("training diverged at iteration {iteration} (non-finite loss)")]
    Diverged {
        iteration: usize,
        trace: Vec<crate::implicit_net::LossRecord>,
    },

    #[error("kernel matrix factorization failed: {0}")]
    Factorization(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
