use thiserror::Error;

use crate::algebra::MultiIndex;

/// Errors raised by the decomposition pipeline and its front-ends.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("monomial {0} lies outside the moment support")]
    OutOfSupport(MultiIndex),

    #[error("shifted sequence has an empty support")]
    EmptyResult,

    #[error("support is not downward-closed: {missing} is missing below {present}")]
    NotDownwardClosed {
        missing: MultiIndex,
        present: MultiIndex,
    },

    #[error("expected {expected} variables, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("duplicate multi-index {0}")]
    DuplicateIndex(MultiIndex),

    #[error("polynomial is identically zero")]
    ZeroPolynomial,

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("insufficient moments: {0}")]
    InsufficientMoments(String),

    #[error("no separating linear form found after {tries} tries")]
    NoSeparatingForm { tries: usize },

    #[error("eigenvector {0} has a vanishing pairing with the sequence")]
    DegenerateEigenvector(usize),

    #[error("Gram matrix of cluster {0} is numerically singular")]
    SingularClusterGram(usize),

    #[error("matrix is numerically singular (condition estimate {cond:.3e})")]
    SingularMatrix { cond: f64 },

    #[error("iterative linear-algebra kernel did not converge")]
    NoConvergence,

    #[error("moment matrix has numerical rank {actual}, below the requested order")]
    RankDeficient { actual: usize },

    #[error("frequency component {component} of term {term} is numerically zero")]
    ZeroFrequency { term: usize, component: usize },

    #[error("exponent estimate {value:.4} for component {component} is not an integer (nearest {rounded}, gap {gap:.3e})")]
    NonIntegerExponent {
        component: usize,
        value: f64,
        rounded: i64,
        gap: f64,
    },

    #[error("recovered frequencies {0} and {1} coincide")]
    CollidingFrequencies(usize, usize),

    #[error("frequency of term {term} is off the unit circle (| |xi| - 1 | = {gap:.3e})")]
    OffCircle { term: usize, gap: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Errors caused by missing data rather than by the numerics.
    pub fn is_insufficient_data(&self) -> bool {
        matches!(self, Error::InsufficientMoments(_) | Error::RankDeficient { .. })
    }

    /// Errors caused by malformed input files or arguments.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::InvalidInput(_)
                | Error::DuplicateIndex(_)
                | Error::NotDownwardClosed { .. }
                | Error::DimensionMismatch { .. }
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
