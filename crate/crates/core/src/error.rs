use thiserror::Error;

/// Errors raised while building scenarios, running solvers or writing results.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Failures of the convex subproblem solver and the D.C. machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    /// The user cannot reach its rate target even at `p_max`; upstream forces it local.
    #[error("user {user} of cell {cell} cannot meet its rate target at p_max")]
    RateUnreachable { cell: usize, user: usize },

    /// No strictly feasible starting point exists for the linearized problem.
    #[error("linearized subproblem of cell {cell} has no strictly feasible point")]
    InfeasibleStart { cell: usize },

    #[error("non-finite gradient at coordinate {coordinate}")]
    NonFiniteGradient { coordinate: usize },

    #[error("barrier method failed: {0}")]
    Numerical(String),

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
