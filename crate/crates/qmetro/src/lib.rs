//! Non-asymptotic Bayesian quantum metrology.
//!
//! Probe states and measurements for two-mode interferometers, qubit sensing
//! networks and multi-mode phase imaging; single-shot optimal estimators;
//! Monte-Carlo Bayesian error curves; Cramér-Rao, Ziv-Zakai and
//! Weiss-Weinstein bounds; closed-form sensor-network asymptotics.

use thiserror::Error;

pub mod bayes_mc;
pub mod bounds;
#[cfg(feature = "cli")]
pub mod cli;
pub mod estimation;
pub mod fockspace;
pub mod measurements;
pub mod networks;
pub mod priors;
pub mod probes;

mod numeric;

pub use num_complex::Complex64 as C64;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("mode index {mode} out of range for {modes} modes")]
    ModeOutOfRange { mode: usize, modes: usize },

    #[error("space dimension {dim} exceeds the memory budget of {limit}")]
    MemoryBudget { dim: usize, limit: usize },

    #[error("operator is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("Fock cutoff too small: leakage {leakage:e} above tolerance {tol:e}")]
    CutoffTooSmall { leakage: f64, tol: f64 },

    #[error("POM completeness defect {0:e} above 1e-7")]
    Completeness(f64),

    #[error("negative probability {0:e}")]
    NegativeProbability(f64),

    #[error("estimator spectrum is not real (imaginary part {0:e}); increase the cutoff")]
    ComplexSpectrum(f64),

    #[error("quadrature did not converge (node doubling changed the result by {0:e})")]
    QuadratureNotConverged(f64),

    #[error("finite-difference derivative unstable (relative change {0:e} on step halving)")]
    DerivativeUnstable(f64),

    #[error("posterior normalisation underflow")]
    PosteriorUnderflow,

    #[error("Fisher information matrix is singular: one or more parameters cannot be estimated with finite precision")]
    SingularFisher,

    #[error("generators do not commute (max commutator {0:e})")]
    NonCommuting(f64),

    #[error("bound is negative beyond tolerance ({0:e})")]
    NegativeBound(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of a numerical check (as opposed to bad configuration).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotHermitian(_)
                | Error::CutoffTooSmall { .. }
                | Error::Completeness(_)
                | Error::NegativeProbability(_)
                | Error::ComplexSpectrum(_)
                | Error::QuadratureNotConverged(_)
                | Error::DerivativeUnstable(_)
                | Error::PosteriorUnderflow
                | Error::SingularFisher
                | Error::NonCommuting(_)
                | Error::NegativeBound(_)
                | Error::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
