use thiserror::Error;

use crate::flsim::FederationTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape error: {0}")]
    Shape(String),

    /// An iterative solver stopped without meeting its tolerance. `best` is
    /// the last iterate and `residual` its max first-order residual.
    #[error("solver did not converge: {message} (residual {residual:e})")]
    Solver {
        message: String,
        best: Vec<f64>,
        residual: f64,
    },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("setup error: {0}")]
    Setup(String),

    #[error("training diverged at round {round}: loss {loss:e}")]
    Diverged {
        round: usize,
        loss: f64,
        partial: Box<FederationTrace>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
