//! Parameters, unit scalings and classical (noise-free) steady states.
//!
//! Physical cavity parameters (decay rates, χ⁽²⁾ coupling, drive) map onto
//! the dimensionless triple (g, μ, γᵣ) that the rest of the crate runs on:
//!
//! * `g  = χ/√(2γ₁γ₂)` — nonlinearity relative to damping; g² is inversely
//!   proportional to the threshold pump photon number,
//! * `μ  = E/E_c = χE/(γ₁γ₂)` — drive relative to the critical drive,
//! * `γᵣ = γ₂/γ₁` — pump-to-signal damping ratio.
//!
//! γ₁ = 1 defines the time unit everywhere; `scale_params` and
//! `unscale_params` round-trip at fixed γ₁.

use crate::error::{Error, Result};
use crate::C64;
use serde::{Deserialize, Serialize};

/// Cavity parameters in physical units (rates per unit time).
///
/// Thermal occupations are carried so the zero-temperature restriction is
/// explicit: both must be 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Signal amplitude decay rate γ₁ (1/time).
    pub gamma1: f64,
    /// Pump amplitude decay rate γ₂ (1/time).
    pub gamma2: f64,
    /// Nonlinear coupling χ (1/time per amplitude).
    pub chi: f64,
    /// External pump drive amplitude E (amplitude/time).
    pub drive: f64,
    /// Thermal occupation of the signal reservoir (must be 0).
    pub nbar1: f64,
    /// Thermal occupation of the pump reservoir (must be 0).
    pub nbar2: f64,
}

impl PhysicalParams {
    pub fn new(gamma1: f64, gamma2: f64, chi: f64, drive: f64) -> Result<Self> {
        let p = Self { gamma1, gamma2, chi, drive, nbar1: 0.0, nbar2: 0.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1 > 0.0) || !self.gamma1.is_finite() {
            return Err(Error::InvalidParameter(format!("gamma1 = {} must be > 0", self.gamma1)));
        }
        if !(self.gamma2 > 0.0) || !self.gamma2.is_finite() {
            return Err(Error::InvalidParameter(format!("gamma2 = {} must be > 0", self.gamma2)));
        }
        if !(self.chi > 0.0) || !self.chi.is_finite() {
            return Err(Error::InvalidParameter(format!("chi = {} must be > 0", self.chi)));
        }
        if !(self.drive >= 0.0) || !self.drive.is_finite() {
            return Err(Error::InvalidParameter(format!("drive = {} must be >= 0", self.drive)));
        }
        if self.nbar1 != 0.0 || self.nbar2 != 0.0 {
            return Err(Error::InvalidParameter(
                "thermal occupations are fixed at zero in this model".into(),
            ));
        }
        Ok(())
    }

    /// Critical drive E_c = γ₁γ₂/χ above which the below-threshold solution
    /// destabilizes.
    pub fn critical_drive(&self) -> f64 {
        self.gamma1 * self.gamma2 / self.chi
    }
}

/// The dimensionless parameter triple plus derived threshold quantities.
///
/// Single source of truth for the physics; all other modules take this.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledParams {
    /// Dimensionless nonlinearity g.
    pub g: f64,
    /// Dimensionless drive μ = E/E_c.
    pub mu: f64,
    /// Decay ratio γᵣ = γ₂/γ₁.
    pub gamma_r: f64,
    /// Threshold pump photon number N_c = 1/(2g²γᵣ).
    pub n_c: f64,
    /// Threshold input photon flux I_c = 1/(4g²), in γ₁ units.
    pub i_c: f64,
    /// Critical drive E_c in γ₁ units.
    pub e_c: f64,
}

impl ScaledParams {
    pub fn new(g: f64, mu: f64, gamma_r: f64) -> Result<Self> {
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::InvalidParameter(format!("g = {g} must be > 0")));
        }
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu = {mu} must be >= 0")));
        }
        if !(gamma_r > 0.0) || !gamma_r.is_finite() {
            return Err(Error::InvalidParameter(format!("gamma_r = {gamma_r} must be > 0")));
        }
        let n_c = 1.0 / (2.0 * g * g * gamma_r);
        let i_c = 1.0 / (4.0 * g * g);
        let e_c = (gamma_r / 2.0).sqrt() / g;
        Ok(Self { g, mu, gamma_r, n_c, i_c, e_c })
    }

    /// Construct from g² (how simulation parameters are usually quoted).
    pub fn from_g_squared(g_squared: f64, mu: f64, gamma_r: f64) -> Result<Self> {
        if !(g_squared > 0.0) || !g_squared.is_finite() {
            return Err(Error::InvalidParameter(format!("g^2 = {g_squared} must be > 0")));
        }
        Self::new(g_squared.sqrt(), mu, gamma_r)
    }

    /// Nonlinear coupling χ in γ₁ units: χ̃ = g√(2γᵣ).
    pub fn chi_tilde(&self) -> f64 {
        self.g * (2.0 * self.gamma_r).sqrt()
    }

    /// Drive E in γ₁ units: Ẽ = μ√(γᵣ/2)/g.
    pub fn drive_tilde(&self) -> f64 {
        self.mu * (self.gamma_r / 2.0).sqrt() / self.g
    }

    /// Classical below-threshold pump amplitude Ẽ/γᵣ = μ/χ̃.
    pub fn classical_pump(&self) -> f64 {
        self.mu / self.chi_tilde()
    }

    /// Non-fatal reliability notes: large g breaks the small-noise
    /// assumptions, and μ within ~10g² of threshold leaves the validity
    /// range of the perturbative corrections.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.g > 0.1 {
            w.push(format!(
                "g = {} is large; the phase-space stochastic treatment assumes g << 1",
                self.g
            ));
        }
        if self.mu < 1.0 && self.mu >= 1.0 - 10.0 * self.g * self.g {
            w.push(format!(
                "mu = {} is within 10 g^2 of threshold; perturbation theory unreliable there",
                self.mu
            ));
        }
        w
    }
}

/// Map physical parameters onto the dimensionless triple.
pub fn scale_params(p: &PhysicalParams) -> Result<ScaledParams> {
    p.validate()?;
    let g = p.chi / (2.0 * p.gamma1 * p.gamma2).sqrt();
    let mu = p.chi * p.drive / (p.gamma1 * p.gamma2);
    let gamma_r = p.gamma2 / p.gamma1;
    ScaledParams::new(g, mu, gamma_r)
}

/// Inverse of [`scale_params`] at a fixed signal decay rate γ₁.
pub fn unscale_params(s: &ScaledParams, gamma1: f64) -> Result<PhysicalParams> {
    if !(gamma1 > 0.0) || !gamma1.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma1 = {gamma1} must be > 0")));
    }
    let gamma2 = s.gamma_r * gamma1;
    let chi = s.g * (2.0 * gamma1 * gamma2).sqrt();
    let drive = s.mu * gamma1 * gamma2 / chi;
    PhysicalParams::new(gamma1, gamma2, chi, drive)
}

/// Which classical solution branch a steady state belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// μ < 1: zero signal field.
    Below,
    /// μ ≥ 1: positive-sign signal branch.
    AbovePlus,
    /// μ ≥ 1: negative-sign signal branch.
    AboveMinus,
}

/// A classical (noise-free) fixed point of the cavity equations, in γ₁
/// units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalState {
    pub alpha1: C64,
    pub alpha2: C64,
    pub branch: Branch,
}

impl ClassicalState {
    /// Pump quadrature x₂ in the dimensionless power-series normalization,
    /// where the below-threshold value is exactly 2μ.
    pub fn scaled_pump_quadrature(&self, s: &ScaledParams) -> f64 {
        (2.0 * s.gamma_r).sqrt() * s.g * 2.0 * self.alpha2.re
    }
}

/// Classical steady states of the cavity, one entry per branch.
///
/// Below threshold (μ < 1) there is a single solution with α₁ = 0 and
/// α₂ = Ẽ/γᵣ. At and above threshold the pump clamps at 1/χ̃ and the
/// signal is bistable, α₁ = ±√(2(Ẽ − Ẽ_c)/χ̃). Above-threshold states are
/// computed (and drift-tested) but the simulation and analytics modules do
/// not accept μ ≥ 1.
pub fn classical_steady_state(s: &ScaledParams) -> Vec<ClassicalState> {
    let chi = s.chi_tilde();
    if s.mu < 1.0 {
        vec![ClassicalState {
            alpha1: C64::new(0.0, 0.0),
            alpha2: C64::new(s.drive_tilde() / s.gamma_r, 0.0),
            branch: Branch::Below,
        }]
    } else {
        let amp = (2.0 * (s.drive_tilde() - s.e_c) / chi).sqrt();
        let alpha2 = C64::new(1.0 / chi, 0.0);
        vec![
            ClassicalState { alpha1: C64::new(amp, 0.0), alpha2, branch: Branch::AbovePlus },
            ClassicalState { alpha1: C64::new(-amp, 0.0), alpha2, branch: Branch::AboveMinus },
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn scale_example_values() {
        // gamma1=1, gamma2=0.5, chi chosen so g^2 = 0.001.
        let chi = (2.0 * 0.5 * 0.001_f64).sqrt();
        let e_c = 1.0 * 0.5 / chi;
        let p = PhysicalParams::new(1.0, 0.5, chi, 0.9 * e_c).unwrap();
        let s = scale_params(&p).unwrap();
        assert_relative_eq!(s.g * s.g, 0.001, max_relative = 1e-14);
        assert_relative_eq!(s.gamma_r, 0.5, max_relative = 1e-14);
        assert_relative_eq!(s.mu, 0.9, max_relative = 1e-14);
        assert_relative_eq!(s.n_c, 1000.0, max_relative = 1e-12);
    }

    #[test]
    fn critical_point_identity() {
        // Driving exactly at E_c gives mu = 1.
        let p = PhysicalParams::new(1.0, 1.0, 0.05, 1.0 / 0.05).unwrap();
        let s = scale_params(&p).unwrap();
        assert_relative_eq!(s.mu, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn threshold_flux_derived_from_two_routes() {
        // I_c = E_c^2/(2 gamma_2) must agree with N_c * gamma_2 / 2.
        let s = ScaledParams::from_g_squared(0.001, 0.3, 1.0).unwrap();
        assert_relative_eq!(s.i_c, 250.0, max_relative = 1e-12);
        assert_relative_eq!(s.i_c, s.e_c * s.e_c / (2.0 * s.gamma_r), max_relative = 1e-12);
        assert_relative_eq!(s.i_c, s.n_c * s.gamma_r / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn scaling_round_trips_at_fixed_gamma1() {
        for &(g2, mu, gr) in
            &[(1e-3, 0.9, 0.5), (1e-4, 0.1, 2.0), (1e-6, 0.99, 0.01), (0.004, 0.0, 10.0)]
        {
            let s = ScaledParams::from_g_squared(g2, mu, gr).unwrap();
            let p = unscale_params(&s, 1.0).unwrap();
            let s2 = scale_params(&p).unwrap();
            assert_relative_eq!(s.g, s2.g, max_relative = 1e-14);
            assert_relative_eq!(s.gamma_r, s2.gamma_r, max_relative = 1e-14);
            if mu > 0.0 {
                assert_relative_eq!(s.mu, s2.mu, max_relative = 1e-14);
            } else {
                assert_abs_diff_eq!(s2.mu, 0.0);
            }
        }
    }

    #[test]
    fn below_threshold_steady_state() {
        let s = ScaledParams::from_g_squared(0.001, 0.5, 0.5).unwrap();
        let states = classical_steady_state(&s);
        assert_eq!(states.len(), 1);
        assert_eq!(states[0].branch, Branch::Below);
        assert_abs_diff_eq!(states[0].alpha1.norm(), 0.0);
        assert_relative_eq!(states[0].scaled_pump_quadrature(&s), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn branches_coincide_at_threshold() {
        let s = ScaledParams::from_g_squared(0.001, 1.0, 0.5).unwrap();
        let states = classical_steady_state(&s);
        assert_eq!(states.len(), 2);
        for st in &states {
            assert_abs_diff_eq!(st.alpha1.norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn threshold_continuity_from_above() {
        let s = |mu: f64| ScaledParams::from_g_squared(0.001, mu, 0.5).unwrap();
        let mut prev = f64::INFINITY;
        for mu in [1.1, 1.01, 1.001, 1.0001] {
            let a = classical_steady_state(&s(mu))[0].alpha1.norm();
            assert!(a < prev);
            prev = a;
        }
        assert!(prev < 0.5);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PhysicalParams::new(0.0, 1.0, 0.1, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, -1.0, 0.1, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, 1.0, 0.1, -1.0).is_err());
        assert!(ScaledParams::new(0.0, 0.5, 1.0).is_err());
        assert!(ScaledParams::new(0.03, -0.1, 1.0).is_err());
        assert!(ScaledParams::new(0.03, 0.5, 0.0).is_err());
    }

    #[test]
    fn warning_for_large_g_and_near_threshold() {
        let s = ScaledParams::new(0.2, 0.5, 1.0).unwrap();
        assert!(!s.warnings().is_empty());
        let s = ScaledParams::from_g_squared(1e-3, 0.9999, 1.0).unwrap();
        assert!(s.warnings().iter().any(|w| w.contains("threshold")));
        let s = ScaledParams::from_g_squared(1e-3, 0.9, 1.0).unwrap();
        assert!(s.warnings().is_empty());
    }
}
