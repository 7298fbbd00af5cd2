use thiserror::Error;

/// Errors raised by the pricing and quantization engines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("singular Jacobian at Newton iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("grid ordering violated at Newton iteration {iteration} after {halvings} step halvings")]
    OrderingViolated { iteration: usize, halvings: usize },

    #[error("Newton did not converge after {iterations} iterations (max residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("lattice construction failed at step {step}: {source}")]
    Lattice { step: usize, source: Box<Error> },
}

impl Error {
    /// Stable machine-readable code, used by the command line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "invalid_params",
            Error::InvalidInput(_) => "invalid_input",
            Error::Numerical(_) => "numerical",
            Error::SingularJacobian { .. } => "singular_jacobian",
            Error::OrderingViolated { .. } => "ordering_violated",
            Error::NotConverged { .. } => "not_converged",
            Error::Lattice { .. } => "lattice",
        }
    }

    /// True for failures caused by user input rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::InvalidParams(_) | Error::InvalidInput(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
