use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },

    #[error("{what} contains non-finite entries")]
    NonFinite { what: &'static str },

    #[error("matrix deviates from its adjoint by {deviation:e} (tolerance {tolerance:e})")]
    NotHermitian { deviation: f64, tolerance: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("state vector has zero norm")]
    ZeroState,

    #[error("empty {what}")]
    Empty { what: &'static str },

    #[error(
        "eigensolver did not converge for a {dim}x{dim} matrix within {max_iterations} iterations"
    )]
    NoConvergence { dim: usize, max_iterations: usize },

    #[error("truncation rank {rank} outside 0..={dim}")]
    RankOutOfRange { rank: usize, dim: usize },

    #[error("truncation rank equals the dimension {dim}; nothing is truncated")]
    NoOpTruncation { dim: usize },

    #[error("device weight rho[{channel}][{state}] = {value} is negative or non-finite")]
    NegativeWeight {
        channel: usize,
        state: usize,
        value: f64,
    },

    #[error("device weights for basis state {state} sum to {sum}, expected 1")]
    Normalization { state: usize, sum: f64 },

    #[error("cutoff {cutoff} outside {min}..={max}")]
    CutoffOutOfRange {
        cutoff: usize,
        min: usize,
        max: usize,
    },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("grids differ: {0}")]
    GridMismatch(String),

    #[error("no admissible times: t0 = {t0} and the first nonzero grid point is {first}")]
    NoAdmissibleTimes { t0: f64, first: f64 },

    #[error("t = {t} is outside the regime t < t0 = {t0}")]
    OutOfRegime { t: f64, t0: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
