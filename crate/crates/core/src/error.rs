use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("matrix is singular (pivot {pivot} below threshold)")]
    SingularMatrix { pivot: usize },

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("steady-state block matrix [[A-I, B], [C, 0]] is singular")]
    AssumptionTwoViolated,

    #[error("feedback gain is not stabilizing (spectral radius {radius})")]
    UnstableGain { radius: f64 },

    #[error("QP solver stopped after {iterations} iterations (primal {primal_residual:e}, dual {dual_residual:e})")]
    SolverFailure {
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
    },

    #[error("state became non-finite at step {step}")]
    NonFinite { step: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
