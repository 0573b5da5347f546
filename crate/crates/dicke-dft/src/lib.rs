//! Exact-diagonalization density-functional toolkit for multi-mode Dicke
//! Hamiltonians.
//!
//! The library builds truncated-basis operators for `N` two-level systems
//! coupled to `M` photon modes, computes low-lying spectra with cutoff
//! control, evaluates the constrained-search density functionals over the
//! magnetization/displacement pair (σ, ξ), inverts the potential↔density
//! map, integrates the coupling-strength adiabatic connection, and runs a
//! residual battery over the exact identities the model satisfies.
//!
//! Grid scans and sampling are data-parallel via rayon (feature `parallel`,
//! on by default) with an order-preserving sequential fallback.

pub mod adiabatic;
pub mod diagnostics;
pub mod error;
pub mod functionals;
pub mod geometry;
pub mod model;
pub mod par;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{ModelParams, Potentials, Truncation, WaveFunction};
