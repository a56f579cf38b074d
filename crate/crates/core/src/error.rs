use thiserror::Error;

/// Errors raised across the reduction, shooting and lifting pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate configuration: pair distance {distance:e} below guard {guard:e}")]
    DegenerateConfiguration { distance: f64, guard: f64 },

    #[error("configuration is not centered (|q1+q2+q3| = {offset:e})")]
    NotCentered { offset: f64 },

    #[error("point lies within {distance:e} of collision point {end}; use the cusp chart")]
    CuspGuard { end: String, distance: f64 },

    #[error("point is not inside any cusp neighborhood")]
    OutsideCusp,

    #[error("tangent vector is not horizontal (residual {residual:e})")]
    NotHorizontal { residual: f64 },

    #[error("crossing at sigma = {sigma} lies within {distance:e} of a collision point")]
    AmbiguousCrossing { sigma: f64, distance: f64 },

    #[error("sequence contains a stutter at position {position}")]
    Stutter { position: usize },

    #[error("invalid syzygy symbol {0:?}")]
    InvalidSymbol(char),

    #[error("empty target sequence")]
    EmptySequence,

    #[error("shooting resolution exceeded: {0}")]
    ResolutionExceeded(String),

    #[error("perturbation too large: {0}")]
    PerturbationTooLarge(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
