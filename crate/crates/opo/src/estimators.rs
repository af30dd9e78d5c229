//! Turn trajectory ensembles into physical observables.
//!
//! Moments are time-and-ensemble averages of the c-number products over
//! the post-discard window; positive-P ensembles yield normally ordered
//! operator moments, Wigner ensembles symmetrically ordered ones.
//!
//! Output spectra come from discrete transforms of the binned quadratures
//! over the analysis window T, on the grid Ω_k = 2πk/T restricted to
//! |Ω| ≤ π/(4Δ) (Δ = bin duration). For the positive-P the external
//! variance is `V = 1 + 2γ·Re⟨z̃(Ω)z̃(−Ω)⟩/T`; for the Wigner the output
//! field is reconstructed per bin from the internal amplitude and the
//! reflected vacuum input (the stored noise sums) and `V = ⟨|Z̃(Ω)|²⟩/T`.
//! In both cases the colored part `V − 1` is deconvolved by the bin
//! averaging response 1/sinc²(ΩΔ/2), which keeps the bin-averaging bias
//! on the resolved band below ~1e-3 of the spectrum's scale. Rectangular
//! window, no tapering; per-trajectory mean subtraction affects only the
//! Ω = 0 bin on this grid, which instead uses ensemble-mean centering.
//!
//! The nonlinear-correction spectrum ΔV is accumulated from per-trajectory
//! differences d = z̃_nl − z̃_lin of common-noise pairs via
//! `z̃_nl z̃_nl − z̃_l z̃_l = d z̃_l + z̃_l d + d d`, so the linear part
//! cancels exactly and the sampling error is set by the small difference.

use crate::dynamics::Representation;
use crate::error::{Error, Result};
use crate::integrator::{MomentSums, TrajectoryRecord};
use crate::model::ScaledParams;
use crate::C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Number of batches used for standard errors.
pub const N_BATCHES: usize = 10;

/// A scalar estimate with its standard error (from ≥ 10 batches).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Value {
    pub value: f64,
    pub std_err: f64,
}

/// Operator ordering of the reported c-number averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentOrdering {
    Normal,
    Symmetric,
}

impl MomentOrdering {
    pub fn for_representation(rep: Representation) -> Self {
        match rep {
            Representation::PositiveP => MomentOrdering::Normal,
            Representation::TruncatedWigner => MomentOrdering::Symmetric,
        }
    }
}

/// Intra-cavity moments with errors.
///
/// `y1_op_sq` is the operator moment ⟨ŷ₁²⟩, assembled as 1 + ⟨y₁²⟩ for
/// positive-P ensembles and ⟨y₁²⟩ for Wigner ensembles. `y1_op_sq_offset`
/// reports ⟨ŷ₁²⟩ − ½; the sign convention of that offset is reported both
/// ways in the literature, so both the full moment and the offset are
/// published.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentSet {
    pub rep: Representation,
    pub ordering: MomentOrdering,
    pub x1_sq: Value,
    pub y1_sq: Value,
    pub x2: Value,
    pub y2: Value,
    /// ⟨x₁y₁y₂⟩ c-number triple product.
    pub triple: Value,
    pub y1_op_sq: Value,
    pub y1_op_sq_offset: Value,
    /// Largest imaginary part left in the pooled c-number averages
    /// (diagnostic; should vanish within sampling error).
    pub imag_residual: f64,
    pub n_traj: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct MomentBatch {
    sums: MomentSums,
    n_traj: u64,
}

/// Streaming accumulator for [`MomentSet`]; merge-able across workers.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    rep: Representation,
    batches: Vec<MomentBatch>,
}

impl MomentAccumulator {
    pub fn new(rep: Representation) -> Self {
        Self { rep, batches: vec![MomentBatch::default(); N_BATCHES] }
    }

    pub fn add(&mut self, rec: &TrajectoryRecord) {
        let b = (rec.index % N_BATCHES as u64) as usize;
        self.batches[b].sums.merge(&rec.moments);
        self.batches[b].n_traj += 1;
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        for (a, b) in self.batches.iter_mut().zip(other.batches.iter()) {
            a.sums.merge(&b.sums);
            a.n_traj += b.n_traj;
        }
    }

    pub fn finish(&self) -> Result<MomentSet> {
        if self.batches.iter().any(|b| b.sums.n == 0) {
            let total: u64 = self.batches.iter().map(|b| b.n_traj).sum();
            return Err(Error::Estimator(format!(
                "error bars need {} non-empty batches; got {} trajectories",
                N_BATCHES, total
            )));
        }
        let n_traj: u64 = self.batches.iter().map(|b| b.n_traj).sum();
        let field = |pick: &dyn Fn(&MomentSums) -> C64| -> (Value, f64) {
            let means: Vec<C64> =
                self.batches.iter().map(|b| pick(&b.sums) / b.sums.n as f64).collect();
            let bn = means.len() as f64;
            let mean: C64 = means.iter().sum::<C64>() / bn;
            let var = means.iter().map(|m| (m.re - mean.re).powi(2)).sum::<f64>() / (bn - 1.0);
            (Value { value: mean.re, std_err: (var / bn).sqrt() }, mean.im.abs())
        };
        let (x1_sq, i1) = field(&|m| m.x1_sq);
        let (y1_sq, i2) = field(&|m| m.y1_sq);
        let (x2, i3) = field(&|m| m.x2);
        let (y2, i4) = field(&|m| m.y2);
        let (triple, i5) = field(&|m| m.x1y1y2);
        let offset = match self.rep {
            Representation::PositiveP => 1.0,
            Representation::TruncatedWigner => 0.0,
        };
        let y1_op_sq = Value { value: offset + y1_sq.value, std_err: y1_sq.std_err };
        let y1_op_sq_offset =
            Value { value: y1_op_sq.value - 0.5, std_err: y1_sq.std_err };
        Ok(MomentSet {
            rep: self.rep,
            ordering: MomentOrdering::for_representation(self.rep),
            x1_sq,
            y1_sq,
            x2,
            y2,
            triple,
            y1_op_sq,
            y1_op_sq_offset,
            imag_residual: i1.max(i2).max(i3).max(i4).max(i5),
            n_traj,
        })
    }
}

/// Estimate intra-cavity moments from a collected ensemble.
pub fn estimate_moments<'a, I>(records: I, rep: Representation) -> Result<MomentSet>
where
    I: IntoIterator<Item = &'a TrajectoryRecord>,
{
    let mut acc = MomentAccumulator::new(rep);
    for r in records {
        acc.add(r);
    }
    acc.finish()
}

/// ⟨x₁y₁y₂⟩ with standard error.
pub fn estimate_triple<'a, I>(records: I, rep: Representation) -> Result<Value>
where
    I: IntoIterator<Item = &'a TrajectoryRecord>,
{
    Ok(estimate_moments(records, rep)?.triple)
}

/// Which quadrature to analyze: mode j ∈ {1, 2} and homodyne angle θ
/// (θ = 0 is x, θ = π/2 is y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSelector {
    pub mode_index: u8,
    pub theta: f64,
}

impl QuadratureSelector {
    pub fn new(mode_index: u8, theta: f64) -> Result<Self> {
        if mode_index != 1 && mode_index != 2 {
            return Err(Error::Usage(format!("mode index {mode_index} must be 1 or 2")));
        }
        if !(0.0..2.0 * PI).contains(&theta) {
            return Err(Error::Usage(format!("theta = {theta} out of [0, 2pi)")));
        }
        Ok(Self { mode_index, theta })
    }

    pub fn x1() -> Self {
        Self { mode_index: 1, theta: 0.0 }
    }

    pub fn y1() -> Self {
        Self { mode_index: 1, theta: PI / 2.0 }
    }

    pub fn x2() -> Self {
        Self { mode_index: 2, theta: 0.0 }
    }

    pub fn y2() -> Self {
        Self { mode_index: 2, theta: PI / 2.0 }
    }
}

/// Whether an estimate is an output variance V(Ω) or a nonlinear
/// correction ΔV(Ω) from a common-noise pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumKind {
    Output,
    Delta,
}

/// Estimated external spectrum on the grid Ω_k = 2πk/T, shot noise = 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub rep: Representation,
    pub selector: QuadratureSelector,
    pub kind: SpectrumKind,
    pub omega: Vec<f64>,
    pub v: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Imaginary part of the accumulated spectral product per bin
    /// (published diagnostic; vanishes within errors).
    pub imag_residual: Vec<f64>,
    pub n_traj: u64,
    pub window: f64,
    pub bin_dt: f64,
}

impl SpectrumEstimate {
    /// Index of the grid frequency nearest to `omega`.
    pub fn nearest_index(&self, omega: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, w) in self.omega.iter().enumerate() {
            let d = (w - omega).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }
}

/// Geometry shared by the spectral accumulators.
#[derive(Debug, Clone, Copy)]
struct SpectralLayout {
    m_bins: usize,
    bin_dt: f64,
    window: f64,
    k_count: usize,
    coupling: f64,
}

impl SpectralLayout {
    fn new(rep: Representation, sel: &QuadratureSelector, s: &ScaledParams, m_bins: usize, bin_dt: f64) -> Result<Self> {
        let _ = rep;
        if m_bins < 64 {
            return Err(Error::Estimator(format!(
                "analysis window too short: {m_bins} bins < 64"
            )));
        }
        let coupling = match sel.mode_index {
            1 => 1.0,
            _ => s.gamma_r,
        };
        // Omega_k = 2 pi k / (m Delta) <= pi/(4 Delta)  =>  k <= m/8
        let k_count = m_bins / 8 + 1;
        Ok(Self { m_bins, bin_dt, window: m_bins as f64 * bin_dt, k_count, coupling })
    }

    fn omega(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.window
    }

    /// Deconvolution of the rectangular bin averaging, applied to the
    /// colored part of the spectrum.
    fn bin_response_correction(&self, k: usize) -> f64 {
        if k == 0 {
            return 1.0;
        }
        let x = 0.5 * self.omega(k) * self.bin_dt;
        let sinc = x.sin() / x;
        1.0 / (sinc * sinc)
    }
}

/// Build the homodyne series for one record: the internal rotated
/// quadrature for positive-P, the reconstructed output field for Wigner.
fn build_series(
    rep: Representation,
    sel: &QuadratureSelector,
    layout: &SpectralLayout,
    rec: &TrajectoryRecord,
    out: &mut [C64],
) {
    let (c, sn) = (sel.theta.cos(), sel.theta.sin());
    match rep {
        Representation::PositiveP => {
            for (z, b) in out.iter_mut().zip(rec.bins.iter()) {
                let (qx, qy) = if sel.mode_index == 1 { (b.x1, b.y1) } else { (b.x2, b.y2) };
                *z = c * qx + sn * qy;
            }
        }
        Representation::TruncatedWigner => {
            // Phi_out = sqrt(2 gamma) a - Phi_in, with the input field
            // identified with the noise: dw/dtau = sqrt(2) Phi_in.
            let g_out = (2.0 * layout.coupling).sqrt();
            let inv_dt = 1.0 / layout.bin_dt;
            let sqrt2 = std::f64::consts::SQRT_2;
            for (z, b) in out.iter_mut().zip(rec.bins.iter()) {
                let (qx, qy, w) = if sel.mode_index == 1 {
                    (b.x1, b.y1, b.nw1)
                } else {
                    (b.x2, b.y2, b.nw2)
                };
                let internal = c * qx + sn * qy;
                let input = sqrt2 * (c * w.re + sn * w.im) * inv_dt;
                *z = internal * g_out - C64::new(input, 0.0);
            }
        }
    }
}

#[derive(Debug, Clone)]
struct SpecBatch {
    /// Σ over trajectories of z̃(Ω_k)·z̃(−Ω_k).
    prod: Vec<C64>,
    /// Σ z̃(0) for ensemble-mean centering of the DC bin.
    dc: C64,
    n: u64,
}

impl SpecBatch {
    fn new(k: usize) -> Self {
        Self { prod: vec![C64::new(0.0, 0.0); k], dc: C64::new(0.0, 0.0), n: 0 }
    }
}

/// Streaming estimator for the external spectrum of one ensemble.
pub struct SpectrumAccumulator {
    rep: Representation,
    sel: QuadratureSelector,
    layout: SpectralLayout,
    fft: Arc<dyn Fft<f64>>,
    scratch: Vec<C64>,
    batches: Vec<SpecBatch>,
}

impl SpectrumAccumulator {
    pub fn new(
        rep: Representation,
        sel: QuadratureSelector,
        s: &ScaledParams,
        m_bins: usize,
        bin_dt: f64,
    ) -> Result<Self> {
        let layout = SpectralLayout::new(rep, &sel, s, m_bins, bin_dt)?;
        let fft = FftPlanner::new().plan_fft_forward(m_bins);
        Ok(Self {
            rep,
            sel,
            layout,
            fft,
            scratch: vec![C64::new(0.0, 0.0); m_bins],
            batches: (0..N_BATCHES).map(|_| SpecBatch::new(layout.k_count)).collect(),
        })
    }

    pub fn add(&mut self, rec: &TrajectoryRecord) -> Result<()> {
        if rec.bins.len() != self.layout.m_bins {
            return Err(Error::Estimator(format!(
                "record has {} bins, expected {}",
                rec.bins.len(),
                self.layout.m_bins
            )));
        }
        build_series(self.rep, &self.sel, &self.layout, rec, &mut self.scratch);
        self.fft.process(&mut self.scratch);
        let m = self.layout.m_bins;
        let dt2 = self.layout.bin_dt * self.layout.bin_dt;
        let b = &mut self.batches[(rec.index % N_BATCHES as u64) as usize];
        for k in 0..self.layout.k_count {
            let kc = (m - k) % m;
            b.prod[k] += self.scratch[k] * self.scratch[kc] * dt2;
        }
        b.dc += self.scratch[0] * self.layout.bin_dt;
        b.n += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &SpectrumAccumulator) {
        for (a, b) in self.batches.iter_mut().zip(other.batches.iter()) {
            for (x, y) in a.prod.iter_mut().zip(b.prod.iter()) {
                *x += *y;
            }
            a.dc += b.dc;
            a.n += b.n;
        }
    }

    pub fn finish(&self) -> Result<SpectrumEstimate> {
        finish_spectrum(
            self.rep,
            self.sel,
            SpectrumKind::Output,
            &self.layout,
            &self.batches,
            |p, layout, rep, k| {
                let t = layout.window;
                match rep {
                    Representation::PositiveP => {
                        let corr = layout.bin_response_correction(k) * 2.0 * layout.coupling / t;
                        (1.0 + corr * p.re, corr * p.im)
                    }
                    Representation::TruncatedWigner => {
                        let corr = layout.bin_response_correction(k);
                        (1.0 + (p.re / t - 1.0) * corr, p.im / t)
                    }
                }
            },
        )
    }
}

fn finish_spectrum(
    rep: Representation,
    sel: QuadratureSelector,
    kind: SpectrumKind,
    layout: &SpectralLayout,
    batches: &[SpecBatch],
    to_v: impl Fn(C64, &SpectralLayout, Representation, usize) -> (f64, f64),
) -> Result<SpectrumEstimate> {
    if batches.iter().any(|b| b.n < 2) {
        let total: u64 = batches.iter().map(|b| b.n).sum();
        return Err(Error::Estimator(format!(
            "error bars need {} batches of >= 2 trajectories; got {} trajectories",
            N_BATCHES, total
        )));
    }
    let n_traj: u64 = batches.iter().map(|b| b.n).sum();
    let mut omega = Vec::with_capacity(layout.k_count);
    let mut v = Vec::with_capacity(layout.k_count);
    let mut std_err = Vec::with_capacity(layout.k_count);
    let mut imag = Vec::with_capacity(layout.k_count);
    for k in 0..layout.k_count {
        let mut vals = Vec::with_capacity(batches.len());
        let mut ims = 0.0f64;
        for b in batches {
            let nb = b.n as f64;
            let mut p = b.prod[k] / nb;
            if k == 0 {
                // ensemble-mean centering of the DC bin (Bessel-corrected)
                let mean_dc = b.dc / nb;
                p = (p - mean_dc * mean_dc) * (nb / (nb - 1.0));
            }
            let (val, im) = to_v(p, layout, rep, k);
            vals.push(val);
            ims += im;
        }
        let bn = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / bn;
        let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (bn - 1.0);
        omega.push(layout.omega(k));
        v.push(mean);
        std_err.push((var / bn).sqrt());
        imag.push(ims / bn);
    }
    Ok(SpectrumEstimate {
        rep,
        selector: sel,
        kind,
        omega,
        v,
        std_err,
        imag_residual: imag,
        n_traj,
        window: layout.window,
        bin_dt: layout.bin_dt,
    })
}

/// Estimate the external output spectrum from a collected ensemble.
pub fn estimate_output_spectrum<'a, I>(
    records: I,
    rep: Representation,
    sel: QuadratureSelector,
    s: &ScaledParams,
) -> Result<SpectrumEstimate>
where
    I: IntoIterator<Item = &'a TrajectoryRecord>,
{
    let mut iter = records.into_iter().peekable();
    let first = iter
        .peek()
        .ok_or_else(|| Error::Estimator("empty ensemble".into()))?;
    let mut acc = SpectrumAccumulator::new(rep, sel, s, first.bins.len(), first.bin_dt)?;
    for r in iter {
        acc.add(r)?;
    }
    acc.finish()
}

#[derive(Debug, Clone)]
struct DeltaBatch {
    prod: Vec<C64>,
    nl0: C64,
    nl0_sq: C64,
    l0: C64,
    l0_sq: C64,
    n: u64,
}

impl DeltaBatch {
    fn new(k: usize) -> Self {
        let z = C64::new(0.0, 0.0);
        Self { prod: vec![z; k], nl0: z, nl0_sq: z, l0: z, l0_sq: z, n: 0 }
    }
}

/// Streaming estimator for ΔV = V_nonlinear − V_linear from common-noise
/// pairs.
pub struct DeltaSpectrumAccumulator {
    rep: Representation,
    sel: QuadratureSelector,
    layout: SpectralLayout,
    fft: Arc<dyn Fft<f64>>,
    nl: Vec<C64>,
    lin: Vec<C64>,
    batches: Vec<DeltaBatch>,
}

impl DeltaSpectrumAccumulator {
    pub fn new(
        rep: Representation,
        sel: QuadratureSelector,
        s: &ScaledParams,
        m_bins: usize,
        bin_dt: f64,
    ) -> Result<Self> {
        let layout = SpectralLayout::new(rep, &sel, s, m_bins, bin_dt)?;
        let fft = FftPlanner::new().plan_fft_forward(m_bins);
        Ok(Self {
            rep,
            sel,
            layout,
            fft,
            nl: vec![C64::new(0.0, 0.0); m_bins],
            lin: vec![C64::new(0.0, 0.0); m_bins],
            batches: (0..N_BATCHES).map(|_| DeltaBatch::new(layout.k_count)).collect(),
        })
    }

    /// Feed one common-noise pair (nonlinear record, linearized record).
    pub fn add(&mut self, nonlinear: &TrajectoryRecord, linear: &TrajectoryRecord) -> Result<()> {
        if nonlinear.index != linear.index
            || nonlinear.bins.len() != linear.bins.len()
            || nonlinear.bins.len() != self.layout.m_bins
        {
            return Err(Error::Estimator("records are not a common-noise pair".into()));
        }
        // Pairing contract: identical Wiener sums per bin.
        if let (Some(a), Some(b)) = (nonlinear.bins.first(), linear.bins.first()) {
            if a.nw1 != b.nw1 || a.nw2 != b.nw2 {
                return Err(Error::Estimator(
                    "records do not share noise; run the ensemble with pairing enabled".into(),
                ));
            }
        }
        build_series(self.rep, &self.sel, &self.layout, nonlinear, &mut self.nl);
        build_series(self.rep, &self.sel, &self.layout, linear, &mut self.lin);
        self.fft.process(&mut self.nl);
        self.fft.process(&mut self.lin);
        let m = self.layout.m_bins;
        let dt = self.layout.bin_dt;
        let dt2 = dt * dt;
        let b = &mut self.batches[(nonlinear.index % N_BATCHES as u64) as usize];
        for k in 0..self.layout.k_count {
            let kc = (m - k) % m;
            let (nk, nkc) = (self.nl[k], self.nl[kc]);
            let (lk, lkc) = (self.lin[k], self.lin[kc]);
            let (dk, dkc) = (nk - lk, nkc - lkc);
            // nl*nl - l*l = d*l + l*d + d*d, exact cancellation of the
            // linear part
            b.prod[k] += (dk * lkc + lk * dkc + dk * dkc) * dt2;
        }
        b.nl0 += self.nl[0] * dt;
        b.nl0_sq += self.nl[0] * self.nl[0] * dt2;
        b.l0 += self.lin[0] * dt;
        b.l0_sq += self.lin[0] * self.lin[0] * dt2;
        b.n += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &DeltaSpectrumAccumulator) {
        for (a, b) in self.batches.iter_mut().zip(other.batches.iter()) {
            for (x, y) in a.prod.iter_mut().zip(b.prod.iter()) {
                *x += *y;
            }
            a.nl0 += b.nl0;
            a.nl0_sq += b.nl0_sq;
            a.l0 += b.l0;
            a.l0_sq += b.l0_sq;
            a.n += b.n;
        }
    }

    pub fn finish(&self) -> Result<SpectrumEstimate> {
        let spec_batches: Vec<SpecBatch> = self
            .batches
            .iter()
            .map(|b| {
                let mut prod = b.prod.clone();
                if b.n >= 2 {
                    let nb = b.n as f64;
                    // centered DC difference:
                    // (<nl0^2> - <nl0>^2) - (<l0^2> - <l0>^2), Bessel factors
                    // applied here so finish_spectrum's DC path is bypassed
                    let c_nl = (b.nl0_sq - b.nl0 * b.nl0 / nb) / (nb - 1.0);
                    let c_l = (b.l0_sq - b.l0 * b.l0 / nb) / (nb - 1.0);
                    prod[0] = (c_nl - c_l) * nb;
                }
                SpecBatch { prod, dc: C64::new(0.0, 0.0), n: b.n }
            })
            .collect();
        finish_spectrum(
            self.rep,
            self.sel,
            SpectrumKind::Delta,
            &self.layout,
            &spec_batches,
            |p, layout, rep, k| {
                let t = layout.window;
                let corr = layout.bin_response_correction(k);
                match rep {
                    Representation::PositiveP => {
                        let f = corr * 2.0 * layout.coupling / t;
                        (f * p.re, f * p.im)
                    }
                    Representation::TruncatedWigner => (corr * p.re / t, p.im / t),
                }
            },
        )
    }
}

/// ΔV(Ω) from paired ensembles (shared noise streams).
pub fn estimate_delta_spectrum<'a, I, J>(
    nonlinear: I,
    linear: J,
    rep: Representation,
    sel: QuadratureSelector,
    s: &ScaledParams,
) -> Result<SpectrumEstimate>
where
    I: IntoIterator<Item = &'a TrajectoryRecord>,
    J: IntoIterator<Item = &'a TrajectoryRecord>,
{
    let mut nl = nonlinear.into_iter().peekable();
    let first = nl.peek().ok_or_else(|| Error::Estimator("empty ensemble".into()))?;
    let mut acc = DeltaSpectrumAccumulator::new(rep, sel, s, first.bins.len(), first.bin_dt)?;
    let mut lin = linear.into_iter();
    for n in nl {
        let l = lin
            .next()
            .ok_or_else(|| Error::Estimator("unpaired input: linear ensemble shorter".into()))?;
        acc.add(n, l)?;
    }
    if lin.next().is_some() {
        return Err(Error::Estimator("unpaired input: nonlinear ensemble shorter".into()));
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::LinearizationMode;
    use crate::integrator::{run_ensemble, EnsembleSpec, SimGrid};
    use approx::assert_abs_diff_eq;

    fn params(g2: f64, mu: f64, gr: f64) -> ScaledParams {
        ScaledParams::from_g_squared(g2, mu, gr).unwrap()
    }

    #[test]
    fn vacuum_positive_p_spectrum_is_exactly_one() {
        let s = params(0.001, 0.0, 0.5);
        let grid = SimGrid::new(0.1, 40.0, 20.0, 1).unwrap();
        let spec = EnsembleSpec::new(20, 5, Representation::PositiveP, LinearizationMode::FullNonlinear, false)
            .unwrap();
        let run = run_ensemble(&spec, &grid, &s, 1).unwrap();
        let est = estimate_output_spectrum(
            run.primary_records(),
            Representation::PositiveP,
            QuadratureSelector::y1(),
            &s,
        )
        .unwrap();
        for (v, im) in est.v.iter().zip(est.imag_residual.iter()) {
            assert_eq!(*v, 1.0);
            assert_eq!(*im, 0.0);
        }
    }

    #[test]
    fn vacuum_moments_are_exactly_zero() {
        let s = params(0.001, 0.0, 0.5);
        let grid = SimGrid::new(0.1, 40.0, 20.0, 1).unwrap();
        let spec = EnsembleSpec::new(20, 5, Representation::PositiveP, LinearizationMode::FullNonlinear, false)
            .unwrap();
        let run = run_ensemble(&spec, &grid, &s, 1).unwrap();
        let m = estimate_moments(run.primary_records(), Representation::PositiveP).unwrap();
        assert_eq!(m.x1_sq.value, 0.0);
        assert_eq!(m.y1_sq.value, 0.0);
        assert_eq!(m.triple.value, 0.0);
        assert_eq!(m.y1_op_sq.value, 1.0);
    }

    #[test]
    fn refuses_error_bars_below_ten_trajectories() {
        let s = params(0.001, 0.5, 0.5);
        let grid = SimGrid::new(0.1, 40.0, 20.0, 1).unwrap();
        let spec = EnsembleSpec::new(8, 5, Representation::PositiveP, LinearizationMode::FullNonlinear, false)
            .unwrap();
        let run = run_ensemble(&spec, &grid, &s, 1).unwrap();
        assert!(matches!(
            estimate_moments(run.primary_records(), Representation::PositiveP),
            Err(Error::Estimator(_))
        ));
    }

    #[test]
    fn refuses_short_window() {
        let s = params(0.001, 0.5, 0.5);
        assert!(SpectrumAccumulator::new(
            Representation::PositiveP,
            QuadratureSelector::y1(),
            &s,
            32,
            0.1
        )
        .is_err());
    }

    #[test]
    fn selector_validation() {
        assert!(QuadratureSelector::new(3, 0.0).is_err());
        assert!(QuadratureSelector::new(1, -0.1).is_err());
        assert!(QuadratureSelector::new(1, 2.0 * PI).is_err());
        assert!(QuadratureSelector::new(2, 1.0).is_ok());
    }

    #[test]
    fn delta_is_exactly_zero_for_degenerate_pairs() {
        // At mu = 0 the positive-P linear and nonlinear systems are the
        // same zero trajectory, so the difference vanishes identically.
        let s = params(0.001, 0.0, 0.5);
        let grid = SimGrid::new(0.1, 40.0, 20.0, 1).unwrap();
        let spec = EnsembleSpec::new(20, 5, Representation::PositiveP, LinearizationMode::FullNonlinear, true)
            .unwrap();
        let run = run_ensemble(&spec, &grid, &s, 1).unwrap();
        let est = estimate_delta_spectrum(
            run.primary_records(),
            run.linear_records().unwrap(),
            Representation::PositiveP,
            QuadratureSelector::y1(),
            &s,
        )
        .unwrap();
        for v in &est.v {
            assert_abs_diff_eq!(*v, 0.0);
        }
    }

    #[test]
    fn delta_refuses_unpaired_input() {
        let s = params(0.001, 0.5, 0.5);
        let grid = SimGrid::new(0.1, 40.0, 20.0, 1).unwrap();
        // two independent unpaired runs (different seeds)
        let spec_a = EnsembleSpec::new(12, 5, Representation::PositiveP, LinearizationMode::FullNonlinear, false)
            .unwrap();
        let spec_b = EnsembleSpec::new(12, 6, Representation::PositiveP, LinearizationMode::Linearized, false)
            .unwrap();
        let a = run_ensemble(&spec_a, &grid, &s, 1).unwrap();
        let b = run_ensemble(&spec_b, &grid, &s, 1).unwrap();
        assert!(estimate_delta_spectrum(
            a.primary_records(),
            b.primary_records(),
            Representation::PositiveP,
            QuadratureSelector::y1(),
            &s,
        )
        .is_err());
    }

    #[test]
    fn spectrum_grid_and_cap() {
        let s = params(0.001, 0.5, 0.5);
        let grid = SimGrid::new(0.1, 40.0, 20.0, 1).unwrap();
        let spec = EnsembleSpec::new(20, 5, Representation::PositiveP, LinearizationMode::FullNonlinear, false)
            .unwrap();
        let run = run_ensemble(&spec, &grid, &s, 1).unwrap();
        let est = estimate_output_spectrum(
            run.primary_records(),
            Representation::PositiveP,
            QuadratureSelector::y1(),
            &s,
        )
        .unwrap();
        // 200 bins -> k = 0..=25, Omega_max = 2 pi 25 / 20 = 7.854
        assert_eq!(est.omega.len(), 26);
        assert_abs_diff_eq!(est.omega[1], 2.0 * PI / 20.0, epsilon = 1e-12);
        let cap = PI / (4.0 * est.bin_dt);
        assert!(est.omega.last().unwrap() <= &(cap + 1e-12));
    }
}
