//! Phase-space Monte Carlo and analytics for the degenerate optical
//! parametric oscillator below threshold.
//!
//! The crate simulates the intra-cavity signal/pump dynamics as trajectory
//! ensembles in two c-number representations — the positive-P (exact,
//! normally ordered averages) and the truncated Wigner (semiclassical,
//! symmetric ordering) — and turns the ensembles into measurable output
//! squeezing spectra and moments. A companion [`analytic`] module carries
//! the below-threshold perturbative closed forms (linearized spectra,
//! O(g²) nonlinear corrections, triple correlations) together with the
//! optimal-drive solver, so simulated and analytic results can be compared
//! on the same grids.
//!
//! All dynamical quantities are dimensionless: the signal amplitude decay
//! rate γ₁ sets the time unit (τ = γ₁t) and frequencies Ω are quoted in
//! units of γ₁. Physics enters through the dimensionless triple
//! (g, μ, γᵣ), see [`model::ScaledParams`].

pub mod analytic;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod integrator;
pub mod model;

pub use error::{Error, Result};

/// Complex amplitude type used throughout.
pub type C64 = num_complex::Complex64;
