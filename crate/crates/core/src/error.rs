use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue:e}")]
    NotPositive { eigenvalue: f64 },

    #[error("matrix trace {trace} deviates from 1")]
    TraceNotUnit { trace: f64 },

    #[error("matrix is not Hermitian (max asymmetry {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid measurement basis: {0}")]
    InvalidBasis(String),

    #[error("{what} has imaginary residue {residue:e}")]
    ImaginaryResidue { what: &'static str, residue: f64 },

    #[error("kernel has a vanishing traceless part and cannot be renormalized")]
    DegenerateKernel,

    #[error("invalid path count {0}: must lie in 1..=16")]
    InvalidPathCount(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("sample {index}: no discordant draw found after {retries} retries")]
    ResampleLimit { index: usize, retries: usize },

    #[error("non-finite loss at epoch {epoch} (last finite epoch: {last_finite:?})")]
    NonFiniteLoss {
        epoch: usize,
        last_finite: Option<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed {kind}: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(kind: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            kind,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
