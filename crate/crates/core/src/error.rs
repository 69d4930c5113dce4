//! Crate-wide error type.

use crate::sp2::Sp2Report;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    DimensionMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },

    /// A row produced more entries than the matrix can hold.
    #[error("row {row} needs {needed} slots but m_max is {m_max}")]
    Overflow {
        row: usize,
        needed: usize,
        m_max: usize,
    },

    #[error("invalid dimension {n}: {reason}")]
    InvalidDimension { n: usize, reason: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParams(&'static str),

    #[error("unparsable hardware subset token `{token}`")]
    Parse { token: String },

    #[error("requested {requested} {what} but the machine exposes {available}")]
    TopologyExceeded {
        what: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("allocation of {bytes} bytes (alignment {align}) failed")]
    Allocation { bytes: usize, align: usize },

    #[error("scale must be nonzero")]
    InvalidScale,

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off:.3e})")]
    ConvergenceFailure { sweeps: usize, off: f64 },

    #[error("degenerate eigenvalue gap {gap:.3e} at occupation {n_occ}")]
    DegenerateGap { n_occ: usize, gap: f64 },

    #[error("degenerate spectral bounds: eps_min {eps_min} >= eps_max {eps_max}")]
    DegenerateBounds { eps_min: f64, eps_max: f64 },

    /// The SP2 iteration stopped without meeting the idempotency tolerance.
    /// The trace log collected up to that point rides along for diagnosis.
    #[error("SP2 did not converge after {iterations} iterations: {reason}")]
    NoConvergence {
        iterations: usize,
        reason: &'static str,
        report: Box<Sp2Report>,
    },

    #[error("matrix market: {0}")]
    MatrixMarket(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
