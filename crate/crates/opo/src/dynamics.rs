//! Drift and noise-increment evaluation for the two stochastic
//! representations of the cavity, in dimensionless time (γ₁ = 1).
//!
//! Positive-P: four independent complex amplitudes (α₁, α₁⁺, α₂, α₂⁺),
//! real Gaussian noise on the signal rows with multiplicative amplitude
//! √(χ̃α₂); the pump rows are noiseless. Truncated Wigner: two complex
//! amplitudes with additive complex vacuum noise on every mode.
//!
//! Both representations share the classical drift; they differ only in the
//! noise and in the doubling of phase space. The linearized variant clamps
//! the pump at its classical value and keeps the signal drift to first
//! order in the fluctuations; it exists to support common-noise
//! linear/nonlinear difference estimates.

use crate::error::{Error, Result};
use crate::model::{ClassicalState, ScaledParams};
use crate::C64;
use serde::{Deserialize, Serialize};

/// Which c-number phase-space mapping drives the trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    /// Doubled phase space, normally ordered averages, exact.
    PositiveP,
    /// Classical amplitudes plus vacuum noise, symmetric ordering.
    TruncatedWigner,
}

/// Full nonlinear dynamics, or the first-order (linearized) system with
/// the pump clamped at its classical value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinearizationMode {
    FullNonlinear,
    Linearized,
}

/// A point in c-number phase space.
///
/// For the positive-P variant, `a1p`/`a2p` are the independent
/// "plus" amplitudes: they are *not* constrained to be conjugates of
/// `a1`/`a2` pointwise, only in distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PhaseState {
    PositiveP { a1: C64, a1p: C64, a2: C64, a2p: C64 },
    Wigner { a1: C64, a2: C64 },
}

impl PhaseState {
    pub fn representation(&self) -> Representation {
        match self {
            PhaseState::PositiveP { .. } => Representation::PositiveP,
            PhaseState::Wigner { .. } => Representation::TruncatedWigner,
        }
    }

    /// Zero state of the given shape.
    pub fn zero(rep: Representation) -> Self {
        let z = C64::new(0.0, 0.0);
        match rep {
            Representation::PositiveP => PhaseState::PositiveP { a1: z, a1p: z, a2: z, a2p: z },
            Representation::TruncatedWigner => PhaseState::Wigner { a1: z, a2: z },
        }
    }

    /// Embed a classical steady state (plus amplitudes equal conjugates).
    pub fn from_classical(rep: Representation, c: &ClassicalState) -> Self {
        match rep {
            Representation::PositiveP => PhaseState::PositiveP {
                a1: c.alpha1,
                a1p: c.alpha1.conj(),
                a2: c.alpha2,
                a2p: c.alpha2.conj(),
            },
            Representation::TruncatedWigner => PhaseState::Wigner { a1: c.alpha1, a2: c.alpha2 },
        }
    }

    /// Signal quadrature x₁ = α₁ + α₁⁺ (complex for positive-P).
    pub fn x1(&self) -> C64 {
        match self {
            PhaseState::PositiveP { a1, a1p, .. } => a1 + a1p,
            PhaseState::Wigner { a1, .. } => a1 + a1.conj(),
        }
    }

    /// Signal quadrature y₁ = (α₁ − α₁⁺)/i.
    pub fn y1(&self) -> C64 {
        let i = C64::new(0.0, 1.0);
        match self {
            PhaseState::PositiveP { a1, a1p, .. } => (a1 - a1p) / i,
            PhaseState::Wigner { a1, .. } => (a1 - a1.conj()) / i,
        }
    }

    /// Pump quadrature x₂ = α₂ + α₂⁺.
    pub fn x2(&self) -> C64 {
        match self {
            PhaseState::PositiveP { a2, a2p, .. } => a2 + a2p,
            PhaseState::Wigner { a2, .. } => a2 + a2.conj(),
        }
    }

    /// Pump quadrature y₂ = (α₂ − α₂⁺)/i.
    pub fn y2(&self) -> C64 {
        let i = C64::new(0.0, 1.0);
        match self {
            PhaseState::PositiveP { a2, a2p, .. } => (a2 - a2p) / i,
            PhaseState::Wigner { a2, .. } => (a2 - a2.conj()) / i,
        }
    }

    pub fn is_finite(&self) -> bool {
        let ok = |z: &C64| z.re.is_finite() && z.im.is_finite();
        match self {
            PhaseState::PositiveP { a1, a1p, a2, a2p } => {
                ok(a1) && ok(a1p) && ok(a2) && ok(a2p)
            }
            PhaseState::Wigner { a1, a2 } => ok(a1) && ok(a2),
        }
    }

    /// `self + c * rhs`, componentwise. Shapes must match.
    pub fn add_scaled(&self, rhs: &PhaseState, c: f64) -> PhaseState {
        match (self, rhs) {
            (
                PhaseState::PositiveP { a1, a1p, a2, a2p },
                PhaseState::PositiveP { a1: b1, a1p: b1p, a2: b2, a2p: b2p },
            ) => PhaseState::PositiveP {
                a1: a1 + c * b1,
                a1p: a1p + c * b1p,
                a2: a2 + c * b2,
                a2p: a2p + c * b2p,
            },
            (
                PhaseState::Wigner { a1, a2 },
                PhaseState::Wigner { a1: b1, a2: b2 },
            ) => PhaseState::Wigner { a1: a1 + c * b1, a2: a2 + c * b2 },
            _ => panic!("phase-space shape mismatch"),
        }
    }

    /// `ca * self + cb * rhs`, componentwise. Shapes must match.
    pub fn affine(&self, ca: f64, rhs: &PhaseState, cb: f64) -> PhaseState {
        match (self, rhs) {
            (
                PhaseState::PositiveP { a1, a1p, a2, a2p },
                PhaseState::PositiveP { a1: b1, a1p: b1p, a2: b2, a2p: b2p },
            ) => PhaseState::PositiveP {
                a1: ca * a1 + cb * b1,
                a1p: ca * a1p + cb * b1p,
                a2: ca * a2 + cb * b2,
                a2p: ca * a2p + cb * b2p,
            },
            (
                PhaseState::Wigner { a1, a2 },
                PhaseState::Wigner { a1: b1, a2: b2 },
            ) => PhaseState::Wigner { a1: ca * a1 + cb * b1, a2: ca * a2 + cb * b2 },
            _ => panic!("phase-space shape mismatch"),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            PhaseState::PositiveP { a1, a1p, a2, a2p } => {
                a1.norm().max(a1p.norm()).max(a2.norm()).max(a2p.norm())
            }
            PhaseState::Wigner { a1, a2 } => a1.norm().max(a2.norm()),
        }
    }
}

/// One step's worth of Wiener increments, one channel per noisy mode.
///
/// Positive-P: `w1`, `w2` are real (imaginary parts zero), independent,
/// each of variance dτ. Truncated Wigner: complex, ⟨dw dw*⟩ = dτ and
/// ⟨dw dw⟩ = 0 (real and imaginary parts independent with variance dτ/2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseIncrement {
    pub w1: C64,
    pub w2: C64,
}

impl NoiseIncrement {
    pub fn zero() -> Self {
        Self { w1: C64::new(0.0, 0.0), w2: C64::new(0.0, 0.0) }
    }
}

fn check_shape(rep: Representation, state: &PhaseState) -> Result<()> {
    if state.representation() != rep {
        return Err(Error::Usage(format!(
            "state shape {:?} does not match representation {:?}",
            state.representation(),
            rep
        )));
    }
    Ok(())
}

/// Deterministic drift, per unit τ.
pub fn drift(
    rep: Representation,
    mode: LinearizationMode,
    state: &PhaseState,
    s: &ScaledParams,
) -> Result<PhaseState> {
    check_shape(rep, state)?;
    Ok(drift_raw(mode, state, s))
}

/// Drift without the shape check; the integrator validates once per
/// trajectory.
pub fn drift_raw(mode: LinearizationMode, state: &PhaseState, s: &ScaledParams) -> PhaseState {
    let chi = s.chi_tilde();
    let e = s.drive_tilde();
    let gr = s.gamma_r;
    let z = C64::new(0.0, 0.0);
    match (state, mode) {
        (PhaseState::PositiveP { a1, a1p, a2, a2p }, LinearizationMode::FullNonlinear) => {
            PhaseState::PositiveP {
                a1: -a1 + chi * a1p * a2,
                a1p: -a1p + chi * a1 * a2p,
                a2: -gr * a2 + e - 0.5 * chi * a1 * a1,
                a2p: -gr * a2p + e - 0.5 * chi * a1p * a1p,
            }
        }
        (PhaseState::PositiveP { a1, a1p, .. }, LinearizationMode::Linearized) => {
            // Pump clamped at E/gamma_r, so chi * alpha2 = mu.
            PhaseState::PositiveP { a1: -a1 + s.mu * a1p, a1p: -a1p + s.mu * a1, a2: z, a2p: z }
        }
        (PhaseState::Wigner { a1, a2 }, LinearizationMode::FullNonlinear) => PhaseState::Wigner {
            a1: -a1 + chi * a1.conj() * a2,
            a2: -gr * a2 + e - 0.5 * chi * a1 * a1,
        },
        (PhaseState::Wigner { a1, .. }, LinearizationMode::Linearized) => {
            PhaseState::Wigner { a1: -a1 + s.mu * a1.conj(), a2: z }
        }
    }
}

/// State increment produced by one set of Wiener increments.
///
/// Positive-P uses the principal branch of √(χ̃α₂); any sign convention
/// gives the same increment distribution because the Gaussian increments
/// are sign-symmetric, and the principal branch keeps runs deterministic.
pub fn noise_increment(
    rep: Representation,
    mode: LinearizationMode,
    state: &PhaseState,
    s: &ScaledParams,
    w: &NoiseIncrement,
) -> Result<PhaseState> {
    check_shape(rep, state)?;
    Ok(noise_increment_raw(mode, state, s, w))
}

/// Noise increment without the shape check.
pub fn noise_increment_raw(
    mode: LinearizationMode,
    state: &PhaseState,
    s: &ScaledParams,
    w: &NoiseIncrement,
) -> PhaseState {
    let chi = s.chi_tilde();
    let z = C64::new(0.0, 0.0);
    match (state, mode) {
        (PhaseState::PositiveP { a2, a2p, .. }, LinearizationMode::FullNonlinear) => {
            PhaseState::PositiveP {
                a1: (chi * a2).sqrt() * w.w1,
                a1p: (chi * a2p).sqrt() * w.w2,
                a2: z,
                a2p: z,
            }
        }
        (PhaseState::PositiveP { .. }, LinearizationMode::Linearized) => {
            let amp = s.mu.sqrt();
            PhaseState::PositiveP { a1: amp * w.w1, a1p: amp * w.w2, a2: z, a2p: z }
        }
        (PhaseState::Wigner { .. }, LinearizationMode::FullNonlinear) => {
            PhaseState::Wigner { a1: w.w1, a2: s.gamma_r.sqrt() * w.w2 }
        }
        (PhaseState::Wigner { .. }, LinearizationMode::Linearized) => {
            PhaseState::Wigner { a1: w.w1, a2: z }
        }
    }
}

/// Itô–Stratonovich drift correction −½ Σ_jk b_jk ∂b_ik/∂x_j for the
/// positive-P system.
///
/// The signal diffusion amplitude √(χ̃α₂) depends only on the pump row,
/// and the pump row is noiseless (its diffusion entries are identically
/// zero), so every term carries a factor b_pump = 0. Evaluating the sum
/// through that structure returns an exact zero state; the Wigner noise is
/// additive so its correction vanishes trivially.
pub fn ito_stratonovich_correction(state: &PhaseState, s: &ScaledParams) -> PhaseState {
    match state {
        PhaseState::PositiveP { a2, a2p, .. } => {
            let chi = s.chi_tilde();
            // d(sqrt(chi*a2))/d(a2), guarded at a2 = 0 where the noise
            // amplitude itself vanishes.
            let grad = |a: C64| {
                let b = (chi * a).sqrt();
                if b.norm() == 0.0 {
                    C64::new(0.0, 0.0)
                } else {
                    0.5 * chi / b
                }
            };
            let b_pump = C64::new(0.0, 0.0); // pump rows carry no noise
            PhaseState::PositiveP {
                a1: 0.5 * b_pump * grad(*a2),
                a1p: 0.5 * b_pump * grad(*a2p),
                a2: C64::new(0.0, 0.0),
                a2p: C64::new(0.0, 0.0),
            }
        }
        PhaseState::Wigner { .. } => PhaseState::zero(Representation::TruncatedWigner),
    }
}
