use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("state left the guard box at step {step}: {state:?}")]
    GuardExceeded { step: usize, state: Vec<f64> },

    #[error(
        "insufficient excitation after {attempts} attempts: best rank {best_rank} of {required}"
    )]
    Excitation {
        attempts: usize,
        best_rank: usize,
        required: usize,
    },

    #[error("interface basis is missing monomial {0}")]
    MissingBasisMonomial(String),

    #[error(
        "feasibility program infeasible: {reason} (primal residual {primal_residual:.3e}, \
         dual residual {dual_residual:.3e}, gap {gap:.3e}); try a larger gamma or mu, \
         a longer horizon, or a richer interface basis"
    )]
    Infeasible {
        reason: String,
        primal_residual: f64,
        dual_residual: f64,
        gap: f64,
    },

    #[error("certificate rejected: {0}")]
    Unverified(String),

    #[error("robust deflation of {name} produced an empty set")]
    EmptySpec { name: String },

    #[error("specification is unrealizable: {0}")]
    EmptyDomain(String),

    #[error("initial state {state:?} is outside the controller domain; nearest winning grid point is {suggestion:?}")]
    OutsideDomain {
        state: Vec<f64>,
        suggestion: Option<Vec<f64>>,
    },

    #[error("malformed artifact {path}: {reason}")]
    Artifact { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the failure means the requested specification cannot be met,
    /// as opposed to bad input or I/O.
    pub fn is_spec_infeasible(&self) -> bool {
        matches!(
            self,
            Error::Infeasible { .. } | Error::EmptySpec { .. } | Error::EmptyDomain(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn artifact(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Artifact {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            got,
        })
    }
}
