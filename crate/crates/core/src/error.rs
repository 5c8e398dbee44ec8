use thiserror::Error;

/// Broad failure class, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Inconclusive,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse failure: {0}")]
    Parse(String),
    #[error("missing field {0}")]
    MissingField(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid rate: {0}")]
    InvalidRate(String),
    #[error("diagonal transfer rate theta[{0}][{0}] must be zero")]
    DiagonalTransfer(usize),
    #[error("transfer graph is not strongly connected ({0} unreachable ordered pairs)")]
    NotConnected(usize),
    #[error("unknown node id {0:?}")]
    UnknownNode(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("demography is not subcritical (spectral abscissa {0})")]
    NotSubcritical(f64),
    #[error("no endemic equilibrium: {0}")]
    NoEndemicEquilibrium(String),
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("eigenvalue solver did not converge")]
    EigenNonConvergence,
    #[error("fixed-point iteration did not converge after {iterations} iterations (last gap {gap:e})")]
    NoConvergence {
        iterations: usize,
        gap: f64,
        last: Vec<f64>,
    },
    #[error("integrator step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("newton iteration did not converge (best residual {best_residual:e})")]
    NewtonFailed { best_residual: f64 },
    #[error("inconclusive experiment: {0}")]
    Inconclusive(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Singular(_)
            | Error::EigenNonConvergence
            | Error::NoConvergence { .. }
            | Error::StepUnderflow { .. }
            | Error::NewtonFailed { .. } => ErrorKind::Numerical,
            Error::Inconclusive(_) => ErrorKind::Inconclusive,
            _ => ErrorKind::Validation,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
