//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite entry at index {index}: {value}")]
    NonFinite { index: usize, value: f64 },

    #[error("antisymmetry violated: max |J^ij + J^ji| = {max_violation:.3e} exceeds {tolerance:.3e}")]
    AntisymmetryViolation { max_violation: f64, tolerance: f64 },

    #[error("casimir index {index} out of range (system declares {count})")]
    CasimirIndex { index: usize, count: usize },

    #[error("numerical rank is ambiguous: singular value {value:.3e} within a factor 10 of cutoff {cutoff:.3e}")]
    RankAmbiguous { value: f64, cutoff: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("degenerate denominator in quadrature ratio: |{value:.3e}| below {threshold:.3e}")]
    DegenerateDenominator { value: f64, threshold: f64 },

    #[error("time step {dt:.3e} exceeds stability bound {bound:.3e}; suggested dt = {suggested:.3e}")]
    StabilityViolation { dt: f64, bound: f64, suggested: f64 },

    #[error("blow-up detected at t = {time}: |coordinate| = {magnitude:.3e} exceeds {threshold:.1e}")]
    BlowUp { time: f64, magnitude: f64, threshold: f64 },

    #[error("parameters give a non-integrable equilibrium: {0}")]
    NonIntegrable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown system `{0}`")]
    UnknownSystem(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
