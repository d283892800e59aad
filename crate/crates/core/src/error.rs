use thiserror::Error;

/// Errors raised by the solver and its supporting machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported quadrature degree {degree} (supported: 1..={max})")]
    UnsupportedQuadrature { degree: usize, max: usize },

    #[error("cell index {cell} out of range (mesh has {cells} cells)")]
    CellOutOfRange { cell: usize, cells: usize },

    #[error("field layout mismatch: expected {expected} coefficients, got {got}")]
    SpaceMismatch { expected: usize, got: usize },

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("eigensolver failed: {0}")]
    EigenFailure(String),

    #[error("interface is empty")]
    EmptyInterface,

    #[error("Gronwall admissibility condition violated at l = {index}")]
    ConditionViolated { index: usize },

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical solvers (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::LinearSolveFailure(_) | Error::NewtonDivergence { .. } | Error::EigenFailure(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
