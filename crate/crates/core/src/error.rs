use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operator does not map the grid onto itself: {0}")]
    IncommensurateMap(String),

    #[error("condition violated ({clause}): {detail}")]
    ConditionViolated { clause: String, detail: String },

    #[error("gap intervals are not disjoint: {0}")]
    DisjointnessViolated(String),

    #[error(
        "operator not invertible on gap of branch {branch}: |H| = {min_abs:e} at omega = {omega}"
    )]
    NonInvertible {
        branch: usize,
        omega: f64,
        min_abs: f64,
    },

    #[error("no frequency domain on which all branch-1 operators are invertible")]
    NoInvertibleDomain,

    #[error("recovery of branch {branch} did not converge after {iterations} iterations (last update {last_update:e})")]
    NotConverged {
        branch: usize,
        iterations: usize,
        last_update: f64,
    },

    #[error("least-squares system is ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("no admissible chain from branch 1 to branch {branch}")]
    ChainUnavailable { branch: usize },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("signals do not share one grid")]
    GridMismatch,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("projection distance increased at iteration {iteration}: {before:e} -> {after:e}")]
    MonotonicityViolated {
        iteration: usize,
        before: f64,
        after: f64,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn violated(clause: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::ConditionViolated {
            clause: clause.into(),
            detail: detail.into(),
        }
    }
}
