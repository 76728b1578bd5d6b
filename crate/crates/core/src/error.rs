use thiserror::Error;

/// Errors raised by the integrators, discretizations and the harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("state norm underflow ({0:e}); right-hand side is singular at the origin")]
    Underflow(f64),

    #[error("relaxation coefficient gamma = {gamma:e} is not positive at t = {t}")]
    NonPositiveGamma { gamma: f64, t: f64 },

    #[error("no sign change of the relaxation residual in [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("root solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("degenerate element {element}: entropy variables are constant but E = {defect:e}")]
    DegenerateElement { element: usize, defect: f64 },

    #[error("quadratic relaxation equation has no positive real root")]
    NoPositiveRoot,

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
