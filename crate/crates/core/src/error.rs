use thiserror::Error;

use crate::solver::IterateTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("power iteration did not converge in {iterations} iterations (last estimate {last_estimate})")]
    Convergence { iterations: usize, last_estimate: f64 },

    #[error("solver diverged at iteration {iteration}: non-finite objective or direction")]
    Diverged {
        iteration: usize,
        trace: Box<IterateTrace>,
    },

    #[error("all {samples} sampled tuples were degenerate")]
    DegenerateSampling { samples: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
