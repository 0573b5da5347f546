//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Requested Hilbert-space dimension exceeds the configured cap.
    #[error("hilbert space dimension {dim} exceeds cap {cap}")]
    Sizing { dim: usize, cap: usize },

    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid model parameters or configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An iterative solver failed to reach its tolerance.
    #[error("{what} did not converge (residual {residual:.3e})")]
    Solver { what: String, residual: f64 },

    /// Cutoff or iteration budget exhausted; best value so far attached.
    #[error("{what} hit its budget before converging (best {best:.12e}, error estimate {err_estimate:.3e})")]
    Convergence {
        what: String,
        best: f64,
        err_estimate: f64,
    },

    /// Magnetization component pinned at ±1: no representing potential exists.
    #[error("target magnetization component {index} is at the boundary; not v-representable")]
    Boundary { index: usize },

    /// Requested density pair lies outside the achievable convex hull.
    #[error("target outside achievable hull (distance {distance:.3e})")]
    Infeasible { distance: f64 },

    /// A state could not be matched to an eigenvector of its Hamiltonian.
    #[error("state identification failed: {0}")]
    Identification(String),

    /// A diagnostic was handed a state violating its precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Basis too small to hold the requested state to the required tail mass.
    #[error("truncated basis drops tail mass {tail_mass:.3e} (limit {limit:.3e}); increase fock_cutoff")]
    Truncation { tail_mass: f64, limit: f64 },

    /// Too few accepted Monte Carlo samples for a reliable answer.
    #[error("statistical error: {0}")]
    Statistical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
