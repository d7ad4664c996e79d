use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid mode set: {0}")]
    InvalidModes(String),

    #[error("mode index {index} out of range for {count} modes")]
    ModeIndex { index: usize, count: usize },

    #[error("basis dimension {dim} exceeds the capacity limit {limit}")]
    Capacity { dim: u128, limit: usize },

    #[error("model error: {0}")]
    Model(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("operator is not Hermitian (max defect {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (worst residual {worst_residual:e}, tolerance {tol:e})")]
    NoConvergence {
        iterations: usize,
        worst_residual: f64,
        tol: f64,
    },

    #[error("shifted system is numerically singular for mode {mode}: {detail}")]
    Singular { mode: usize, detail: String },

    #[error("parity decomposition failed: off-block magnitude {offblock:e}, block defect {block_defect:e}")]
    Decomposition { offblock: f64, block_defect: f64 },

    #[error("diagnostic unavailable: {0}")]
    Unavailable(String),

    #[error("dense linear algebra failure: {0}")]
    Linalg(String),
}

pub type Result<T> = std::result::Result<T, Error>;
