use thiserror::Error;

/// Errors raised by geometry construction, the solvers and the study drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("geometry validity error: {0}")]
    GeometryValidity(String),

    #[error("invalid construction: {0}")]
    Construction(String),

    #[error("non-finite value: {0}")]
    Evaluation(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverDivergence { iterations: usize, residual: f64 },

    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("rate fitting error: {0}")]
    Fitting(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
