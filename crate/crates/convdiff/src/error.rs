//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model, grid or measurement configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Linear solve inside the time stepper failed.
    #[error("linear solve failed: {0}")]
    Solve(String),

    /// Measurement extraction rejected (resolution guard, geometry).
    #[error("measurement error: {0}")]
    Measurement(String),

    /// The local design around an evaluation point does not determine
    /// the local-linear weights.
    #[error("degenerate design at x = {x:?}: {active} active locations, min eigenvalue {min_eig:.3e}")]
    DegenerateDesign {
        x: Vec<f64>,
        active: usize,
        min_eig: f64,
    },

    /// Observed Fisher information too ill-conditioned to invert.
    #[error("singular Fisher information: condition number {cond:.3e} exceeds {limit:.3e}")]
    SingularFisher { cond: f64, limit: f64 },

    /// Estimation failed for a reason other than a singular Fisher matrix.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Numerical quadrature did not reach the requested tolerance.
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    /// An operation was called with inconsistent arguments.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
