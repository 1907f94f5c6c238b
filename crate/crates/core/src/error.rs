use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed config document: {0}")]
    Config(String),

    #[error("invalid system spec: {0}")]
    Invalid(String),

    #[error("zero harmonic index")]
    ZeroHarmonicIndex,

    #[error("eigen-solver failure: {message} (grid points {grid_points}, spacing {spacing:e})")]
    EigenSolver {
        message: String,
        grid_points: usize,
        spacing: f64,
    },

    #[error("V1 potential is not real: max |Im V1| = {max_imag:e} exceeds {limit:e}")]
    NonRealPotential { max_imag: f64, limit: f64 },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("grid mismatch: {left} vs {right} points")]
    GridMismatch { left: usize, right: usize },

    #[error("channel energy {energy} collides with basis eigenvalue #{index}")]
    PoleCollision { index: usize, energy: f64 },

    #[error("energy {energy} lies within {tolerance:e} of pole {pole}")]
    PoleProximity {
        energy: f64,
        pole: f64,
        tolerance: f64,
    },

    #[error("negative square-root argument {argument:e} in exact denominator")]
    SqrtDomain { argument: f64 },

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("could not establish a bracket on ({lo}, {hi}): {reason}")]
    BracketFailure { lo: f64, hi: f64, reason: String },

    #[error("spectrum invariant violated: {0}")]
    InvariantViolation(String),

    #[error("realisation count {requested} is not admissible: {reason}")]
    RealisationCount { requested: usize, reason: String },

    #[error("vanishing denominator {value:e} in series kernel (basis state {index})")]
    VanishingDenominator { value: f64, index: usize },

    #[error("base state {n} at root {energy} has an evanescent Bloch wavenumber")]
    Evanescent { n: usize, energy: f64 },

    #[error("oracle failure: {0}")]
    Oracle(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_)
            | Error::Invalid(_)
            | Error::ZeroHarmonicIndex
            | Error::IndexOutOfRange(_)
            | Error::GridMismatch { .. }
            | Error::UnsupportedMode(_)
            | Error::RealisationCount { .. } => ErrorClass::Validation,
            _ => ErrorClass::Numerical,
        }
    }

    pub(crate) fn invalid(rule: impl Into<String>) -> Self {
        Error::Invalid(rule.into())
    }
}
