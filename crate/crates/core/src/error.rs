use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is rank deficient: numerical rank {rank} < {expected} columns")]
    RankDeficient { rank: usize, expected: usize },

    #[error("{what} did not converge after {iterations} iterations")]
    NotConverged { what: String, iterations: usize },

    #[error("rounding did not converge after {iterations} iterations (last alpha {alpha:.4e}, beta {beta:.4e})")]
    RoundingNotConverged {
        iterations: usize,
        alpha: f64,
        beta: f64,
    },

    #[error("simplex stalled after {iterations} pivots (basis {basis:?})")]
    SimplexStall { iterations: usize, basis: Vec<usize> },

    #[error("enumeration cap exceeded: {0}; use randomized mode")]
    CapExceeded(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command line driver: 3 for solver
    /// non-convergence, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotConverged { .. }
            | Error::RoundingNotConverged { .. }
            | Error::SimplexStall { .. } => 3,
            _ => 2,
        }
    }
}
