//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by grid construction, solvers and the run driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("fields or operators live on different grids")]
    GridMismatch,

    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },

    #[error("zero field where a nonzero field is required")]
    ZeroField,

    /// Negative curvature encountered in CG; the operator is not positive
    /// definite.
    #[error("CG breakdown at iteration {iterations}: curvature {curvature:.3e} <= 0")]
    CgBreakdown { iterations: usize, curvature: f64 },

    #[error("{what}: no convergence within {iterations} iterations (residual {residual:.3e})")]
    ConvergenceFailure {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// The computed principal eigenfunction has a non-positive node. Signals a
    /// discretization too coarse for the potential.
    #[error("principal eigenfunction not positive at node {node} (value {value:.3e})")]
    PositivityViolation { node: usize, value: f64 },

    /// The logistic problem has no positive solution for this lambda; only
    /// lambda > lambda1(q0) is admissible.
    #[error(
        "no positive solution: lambda = {lambda} is not above lambda1(q0) = {lambda1}; \
         admissible range is lambda > {lambda1}"
    )]
    NoPositiveSolution { lambda: f64, lambda1: f64 },

    /// lambda coincides with lambda1(q0); the logistic problem only has the
    /// zero solution there.
    #[error("only the zero solution exists at lambda = lambda1(q0) = {lambda1}")]
    OnlyZeroSolution { lambda1: f64 },

    #[error("line search stagnated at step {step:.3e} (residual {residual:.3e})")]
    LineSearchStagnation { step: f64, residual: f64 },

    #[error("grids are not nested: {0}")]
    NotNested(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code convention: 4 for configuration problems, 3 for
    /// solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse(_) | Error::NotNested(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
