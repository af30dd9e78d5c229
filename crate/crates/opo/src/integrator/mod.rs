//! Semi-implicit midpoint SDE stepping and parallel trajectory ensembles.
//!
//! Each step solves the midpoint fixed point
//! `x̄ = x + ½[dτ·a(x̄) + b(x̄)·Δw]` by iteration and advances to
//! `2x̄ − x`. The midpoint values double as trapezoidal bin averages for
//! the spectral estimators; equal-time moments are accumulated from the
//! step endpoints (midpoint values correlate with the increment inside the
//! step and would bias squared moments at O(dτ)).
//!
//! Trajectories are independent units of work addressed by a counter-based
//! random stream (see [`rng`]); ensembles fold trajectory outputs into
//! caller-supplied accumulators chunk by chunk, deterministically for any
//! worker count.

pub mod rng;

use crate::dynamics::{
    drift_raw, noise_increment_raw, LinearizationMode, NoiseIncrement, PhaseState, Representation,
};
use crate::error::{Error, Result};
use crate::model::ScaledParams;
use crate::C64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Fixed-point iterations in the midpoint solver.
pub const MIDPOINT_ITERATIONS: u32 = 4;

/// Trajectories per unit of parallel work.
const CHUNK: u64 = 32;

/// Time grid for one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    /// Step size dτ.
    pub dtau: f64,
    /// Total integration time.
    pub tau_max: f64,
    /// Equilibration cut; only τ ≥ tau_discard is recorded.
    pub tau_discard: f64,
    /// Steps per output bin.
    pub sample_stride: u32,
}

impl SimGrid {
    pub fn new(dtau: f64, tau_max: f64, tau_discard: f64, sample_stride: u32) -> Result<Self> {
        let g = Self { dtau, tau_max, tau_discard, sample_stride };
        g.validate()?;
        Ok(g)
    }

    /// Desk-scale default: dτ = 0.1, τ_max = 1000, discard the first half,
    /// one step per bin.
    pub fn default_desk() -> Self {
        Self { dtau: 0.1, tau_max: 1000.0, tau_discard: 500.0, sample_stride: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dtau > 0.0) || !self.dtau.is_finite() {
            return Err(Error::InvalidParameter(format!("dtau = {} must be > 0", self.dtau)));
        }
        if !(self.tau_discard >= 0.0) || !(self.tau_discard < self.tau_max) {
            return Err(Error::InvalidParameter(
                "require 0 <= tau_discard < tau_max".into(),
            ));
        }
        if self.sample_stride == 0 {
            return Err(Error::InvalidParameter("sample_stride must be >= 1".into()));
        }
        let whole = |x: f64, name: &str| -> Result<u64> {
            let n = x.round();
            if (x - n).abs() > 1e-6 * x.abs().max(1.0) || n < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be a whole number of steps, got {x}"
                )));
            }
            Ok(n as u64)
        };
        let steps = whole(self.tau_max / self.dtau, "tau_max/dtau")?;
        let disc = whole(self.tau_discard / self.dtau, "tau_discard/dtau")?;
        let analysis = steps - disc;
        if analysis % self.sample_stride as u64 != 0 {
            return Err(Error::InvalidParameter(
                "analysis window must hold a whole number of bins".into(),
            ));
        }
        let bins = analysis / self.sample_stride as u64;
        if bins < 64 {
            return Err(Error::InvalidParameter(format!(
                "analysis window holds {bins} bins; at least 64 required"
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> u64 {
        (self.tau_max / self.dtau).round() as u64
    }

    pub fn discard_steps(&self) -> u64 {
        (self.tau_discard / self.dtau).round() as u64
    }

    pub fn n_bins(&self) -> u64 {
        (self.n_steps() - self.discard_steps()) / self.sample_stride as u64
    }

    /// Bin duration Δ = dτ · stride.
    pub fn bin_duration(&self) -> f64 {
        self.dtau * self.sample_stride as f64
    }

    /// Analysis window length T = τ_max − τ_discard.
    pub fn window(&self) -> f64 {
        self.tau_max - self.tau_discard
    }
}

/// What to run and how many times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_traj: u64,
    pub seed: u64,
    pub rep: Representation,
    pub mode: LinearizationMode,
    /// Run a linearized twin on identical noise alongside the nonlinear
    /// system (common-noise difference estimation).
    pub paired: bool,
}

impl EnsembleSpec {
    pub fn new(
        n_traj: u64,
        seed: u64,
        rep: Representation,
        mode: LinearizationMode,
        paired: bool,
    ) -> Result<Self> {
        if n_traj < 2 {
            return Err(Error::InvalidParameter("n_traj must be >= 2".into()));
        }
        if paired && mode != LinearizationMode::FullNonlinear {
            return Err(Error::Usage(
                "paired runs pair a full-nonlinear primary with a linearized twin".into(),
            ));
        }
        Ok(Self { n_traj, seed, rep, mode, paired })
    }
}

/// One output bin: trapezoidal means of the quadratures over the bin and
/// the summed Wiener increments per noise channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub x1: C64,
    pub y1: C64,
    pub x2: C64,
    pub y2: C64,
    /// Σ dw₁ over the bin (signal channel).
    pub nw1: C64,
    /// Σ dw₂ over the bin (second channel: α₁⁺ row for positive-P, pump
    /// for Wigner).
    pub nw2: C64,
}

/// Running sums of equal-time moments over post-discard step endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MomentSums {
    pub x1_sq: C64,
    pub y1_sq: C64,
    pub x2: C64,
    pub y2: C64,
    pub x1y1y2: C64,
    pub n: u64,
}

impl MomentSums {
    fn push(&mut self, state: &PhaseState) {
        let x1 = state.x1();
        let y1 = state.y1();
        let y2 = state.y2();
        self.x1_sq += x1 * x1;
        self.y1_sq += y1 * y1;
        self.x2 += state.x2();
        self.y2 += y2;
        self.x1y1y2 += x1 * y1 * y2;
        self.n += 1;
    }

    pub fn merge(&mut self, other: &MomentSums) {
        self.x1_sq += other.x1_sq;
        self.y1_sq += other.y1_sq;
        self.x2 += other.x2;
        self.y2 += other.y2;
        self.x1y1y2 += other.x1y1y2;
        self.n += other.n;
    }
}

/// Binned output of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub rep: Representation,
    pub mode: LinearizationMode,
    /// Bin duration Δ.
    pub bin_dt: f64,
    /// τ at the start of the analysis window.
    pub tau_start: f64,
    pub bins: Vec<Bin>,
    pub moments: MomentSums,
    pub initial: PhaseState,
    pub final_state: PhaseState,
}

impl TrajectoryRecord {
    /// Analysis window length T = (number of bins) · Δ.
    pub fn window(&self) -> f64 {
        self.bins.len() as f64 * self.bin_dt
    }
}

/// Completed output of one trajectory index: the primary record plus, for
/// paired runs, the linearized twin integrated on identical noise.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryOutput {
    pub primary: TrajectoryRecord,
    pub linear: Option<TrajectoryRecord>,
}

/// Result of running one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum TrajectoryOutcome {
    Completed(Box<TrajectoryOutput>),
    /// A non-finite state was produced at `step`; the trajectory is
    /// excluded from averages and counted.
    Divergent { index: u64, step: u64 },
}

/// Counters for a finished ensemble.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub n_requested: u64,
    pub n_completed: u64,
    pub divergent: Vec<u64>,
}

impl RunStats {
    /// More than 0.1% divergent trajectories marks the ensemble
    /// unreliable.
    pub fn reliable(&self) -> bool {
        (self.divergent.len() as f64) <= 1e-3 * self.n_requested as f64
    }
}

/// Draw one step's Wiener increments. Positive-P consumes two real
/// normals; Wigner consumes four (real and imaginary parts of both
/// channels), always in the same order.
pub fn sample_noise(rep: Representation, dtau: f64, rng: &mut impl Rng) -> NoiseIncrement {
    let sd = dtau.sqrt();
    match rep {
        Representation::PositiveP => {
            let w1: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
            let w2: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
            NoiseIncrement { w1: C64::new(w1, 0.0), w2: C64::new(w2, 0.0) }
        }
        Representation::TruncatedWigner => {
            let sc = (dtau / 2.0).sqrt();
            let a: f64 = rng.sample::<f64, _>(StandardNormal);
            let b: f64 = rng.sample::<f64, _>(StandardNormal);
            let c: f64 = rng.sample::<f64, _>(StandardNormal);
            let d: f64 = rng.sample::<f64, _>(StandardNormal);
            NoiseIncrement { w1: C64::new(a * sc, b * sc), w2: C64::new(c * sc, d * sc) }
        }
    }
}

/// Initial state for one trajectory: pump at its classical steady state;
/// signal x-quadrature drawn from a Gaussian close to the known
/// steady-state variance so equilibration is short.
///
/// Positive-P: x₁ ~ N(0, μ/(1−μ)) split symmetrically between α₁ and α₁⁺
/// (y₁ = 0). Wigner: x₁ ~ N(0, 1/(1−μ)), y₁ ~ N(0, 1/(1+μ)), and the pump
/// additionally gets a vacuum-width spread (⟨|δα₂|²⟩ = ½).
pub fn initial_state(rep: Representation, s: &ScaledParams, rng: &mut impl Rng) -> PhaseState {
    let pump = s.classical_pump();
    match rep {
        Representation::PositiveP => {
            let sd = if s.mu > 0.0 { (s.mu / (1.0 - s.mu)).sqrt() } else { 0.0 };
            let x: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
            let half = C64::new(0.5 * x, 0.0);
            PhaseState::PositiveP {
                a1: half,
                a1p: half,
                a2: C64::new(pump, 0.0),
                a2p: C64::new(pump, 0.0),
            }
        }
        Representation::TruncatedWigner => {
            let x: f64 =
                rng.sample::<f64, _>(StandardNormal) * (1.0 / (1.0 - s.mu)).sqrt();
            let y: f64 =
                rng.sample::<f64, _>(StandardNormal) * (1.0 / (1.0 + s.mu)).sqrt();
            let u: f64 = rng.sample(StandardNormal);
            let v: f64 = rng.sample(StandardNormal);
            PhaseState::Wigner {
                a1: C64::new(0.5 * x, 0.5 * y),
                a2: C64::new(pump + 0.5 * u, 0.5 * v),
            }
        }
    }
}

/// One semi-implicit midpoint step; returns the state after dτ.
///
/// Deterministic given its inputs. `iterations` fixed-point sweeps are
/// applied starting from the current state (4 is the working default).
pub fn semi_implicit_step(
    rep: Representation,
    mode: LinearizationMode,
    state: &PhaseState,
    s: &ScaledParams,
    dtau: f64,
    w: &NoiseIncrement,
    iterations: u32,
) -> Result<PhaseState> {
    if state.representation() != rep {
        return Err(Error::Usage(format!(
            "state shape {:?} does not match representation {:?}",
            state.representation(),
            rep
        )));
    }
    Ok(step_with_midpoint(mode, state, s, dtau, w, iterations).0)
}

/// Midpoint step returning (endpoint, midpoint). The midpoint equals the
/// trapezoidal average of the step's endpoints and is what the bins
/// record.
pub fn step_with_midpoint(
    mode: LinearizationMode,
    state: &PhaseState,
    s: &ScaledParams,
    dtau: f64,
    w: &NoiseIncrement,
    iterations: u32,
) -> (PhaseState, PhaseState) {
    let mut mid = *state;
    for _ in 0..iterations {
        let d = drift_raw(mode, &mid, s);
        let n = noise_increment_raw(mode, &mid, s, w);
        mid = state.add_scaled(&d, 0.5 * dtau).add_scaled(&n, 0.5);
    }
    (state.affine(-1.0, &mid, 2.0), mid)
}

/// Accumulates one system's bins and moments during a run.
///
/// Public so that callers driving [`step_with_midpoint`] manually (e.g.
/// common-path step-size studies) can produce records identical in layout
/// to [`run_trajectory`]'s.
#[derive(Debug, Clone)]
pub struct TrajectoryRecorder {
    grid: SimGrid,
    index: u64,
    rep: Representation,
    mode: LinearizationMode,
    initial: PhaseState,
    bins: Vec<Bin>,
    moments: MomentSums,
    acc: Bin,
    in_bin: u32,
    step: u64,
}

impl TrajectoryRecorder {
    pub fn new(
        grid: &SimGrid,
        index: u64,
        rep: Representation,
        mode: LinearizationMode,
        initial: PhaseState,
    ) -> Self {
        let z = C64::new(0.0, 0.0);
        let zero_bin = Bin { x1: z, y1: z, x2: z, y2: z, nw1: z, nw2: z };
        Self {
            grid: *grid,
            index,
            rep,
            mode,
            initial,
            bins: Vec::with_capacity(grid.n_bins() as usize),
            moments: MomentSums::default(),
            acc: zero_bin,
            in_bin: 0,
            step: 0,
        }
    }

    /// Record one completed step (call for every step, pre-discard
    /// included; the recorder applies the cut itself).
    pub fn push(&mut self, mid: &PhaseState, endpoint: &PhaseState, w: &NoiseIncrement) {
        let st = self.step;
        self.step += 1;
        if st < self.grid.discard_steps() {
            return;
        }
        self.moments.push(endpoint);
        self.acc.x1 += mid.x1();
        self.acc.y1 += mid.y1();
        self.acc.x2 += mid.x2();
        self.acc.y2 += mid.y2();
        self.acc.nw1 += w.w1;
        self.acc.nw2 += w.w2;
        self.in_bin += 1;
        if self.in_bin == self.grid.sample_stride {
            let m = 1.0 / self.grid.sample_stride as f64;
            let z = C64::new(0.0, 0.0);
            let mut bin = std::mem::replace(
                &mut self.acc,
                Bin { x1: z, y1: z, x2: z, y2: z, nw1: z, nw2: z },
            );
            bin.x1 *= m;
            bin.y1 *= m;
            bin.x2 *= m;
            bin.y2 *= m;
            self.bins.push(bin);
            self.in_bin = 0;
        }
    }

    pub fn finish(self, final_state: PhaseState) -> TrajectoryRecord {
        debug_assert_eq!(self.bins.len() as u64, self.grid.n_bins());
        TrajectoryRecord {
            index: self.index,
            rep: self.rep,
            mode: self.mode,
            bin_dt: self.grid.bin_duration(),
            tau_start: self.grid.tau_discard,
            bins: self.bins,
            moments: self.moments,
            initial: self.initial,
            final_state,
        }
    }
}

fn check_below_threshold(s: &ScaledParams) -> Result<()> {
    if s.mu >= 1.0 {
        return Err(Error::Domain(format!(
            "simulation requires mu < 1 (got mu = {}); above-threshold dynamics are not supported",
            s.mu
        )));
    }
    Ok(())
}

/// Integrate one trajectory. The random stream is derived from
/// (spec.seed, trajectory_index) only, so the result is independent of
/// execution context. For paired specs, the linearized twin consumes the
/// identical increments and initial state.
pub fn run_trajectory(
    spec: &EnsembleSpec,
    grid: &SimGrid,
    s: &ScaledParams,
    trajectory_index: u64,
) -> Result<TrajectoryOutcome> {
    grid.validate()?;
    check_below_threshold(s)?;
    let mut rng = rng::trajectory_stream(spec.seed, trajectory_index);
    let init = initial_state(spec.rep, s, &mut rng);

    let mut primary = init;
    let mut rec_p =
        TrajectoryRecorder::new(grid, trajectory_index, spec.rep, spec.mode, init);
    let mut twin = if spec.paired { Some(init) } else { None };
    let mut rec_l = spec.paired.then(|| {
        TrajectoryRecorder::new(grid, trajectory_index, spec.rep, LinearizationMode::Linearized, init)
    });

    let n_steps = grid.n_steps();
    for step in 0..n_steps {
        let w = sample_noise(spec.rep, grid.dtau, &mut rng);
        let (next, mid) =
            step_with_midpoint(spec.mode, &primary, s, grid.dtau, &w, MIDPOINT_ITERATIONS);
        if !next.is_finite() {
            return Ok(TrajectoryOutcome::Divergent { index: trajectory_index, step });
        }
        rec_p.push(&mid, &next, &w);
        primary = next;
        if let (Some(tw), Some(rl)) = (twin.as_mut(), rec_l.as_mut()) {
            let (nl, ml) = step_with_midpoint(
                LinearizationMode::Linearized,
                tw,
                s,
                grid.dtau,
                &w,
                MIDPOINT_ITERATIONS,
            );
            if !nl.is_finite() {
                return Ok(TrajectoryOutcome::Divergent { index: trajectory_index, step });
            }
            rl.push(&ml, &nl, &w);
            *tw = nl;
        }
    }

    let linear = match (twin, rec_l) {
        (Some(tw), Some(rl)) => Some(rl.finish(tw)),
        _ => None,
    };
    Ok(TrajectoryOutcome::Completed(Box::new(TrajectoryOutput {
        primary: rec_p.finish(primary),
        linear,
    })))
}

/// Run the ensemble, folding completed trajectories into accumulators.
///
/// Work is split into fixed chunks processed in index order within each
/// chunk and merged in chunk order, so the result is bitwise reproducible
/// for any worker count; `workers = 0` uses all available cores.
pub fn run_fold<A, I, F, M>(
    spec: &EnsembleSpec,
    grid: &SimGrid,
    s: &ScaledParams,
    workers: usize,
    init: I,
    fold: F,
    merge: M,
) -> Result<(A, RunStats)>
where
    A: Send,
    I: Fn() -> A + Send + Sync,
    F: Fn(&mut A, TrajectoryOutput) + Send + Sync,
    M: Fn(&mut A, A),
{
    grid.validate()?;
    check_below_threshold(s)?;
    let n = spec.n_traj;
    let ranges: Vec<(u64, u64)> =
        (0..n).step_by(CHUNK as usize).map(|lo| (lo, (lo + CHUNK).min(n))).collect();

    let work = |&(lo, hi): &(u64, u64)| -> Result<(A, Vec<u64>)> {
        let mut acc = init();
        let mut divergent = Vec::new();
        for idx in lo..hi {
            match run_trajectory(spec, grid, s, idx)? {
                TrajectoryOutcome::Completed(out) => fold(&mut acc, *out),
                TrajectoryOutcome::Divergent { index, .. } => divergent.push(index),
            }
        }
        Ok((acc, divergent))
    };

    let parts: Vec<(A, Vec<u64>)> = if workers == 1 {
        let mut v = Vec::with_capacity(ranges.len());
        for r in &ranges {
            v.push(work(r)?);
        }
        v
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
        pool.install(|| ranges.par_iter().map(work).collect::<Result<Vec<_>>>())?
    };

    let mut stats = RunStats { n_requested: n, n_completed: 0, divergent: Vec::new() };
    let mut iter = parts.into_iter();
    let (mut acc, div) = iter.next().expect("n_traj >= 2 yields at least one chunk");
    stats.divergent.extend(div);
    for (a, div) in iter {
        merge(&mut acc, a);
        stats.divergent.extend(div);
    }
    stats.n_completed = n - stats.divergent.len() as u64;
    Ok((acc, stats))
}

/// A fully collected ensemble (use [`run_fold`] for large runs).
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub outputs: Vec<TrajectoryOutput>,
    pub stats: RunStats,
}

impl EnsembleRun {
    pub fn primary_records(&self) -> Vec<&TrajectoryRecord> {
        self.outputs.iter().map(|o| &o.primary).collect()
    }

    pub fn linear_records(&self) -> Option<Vec<&TrajectoryRecord>> {
        self.outputs.iter().map(|o| o.linear.as_ref()).collect()
    }
}

/// Run and collect every trajectory record.
pub fn run_ensemble(
    spec: &EnsembleSpec,
    grid: &SimGrid,
    s: &ScaledParams,
    workers: usize,
) -> Result<EnsembleRun> {
    let (outputs, stats) = run_fold(
        spec,
        grid,
        s,
        workers,
        Vec::new,
        |v: &mut Vec<TrajectoryOutput>, out| v.push(out),
        |v, mut w| v.append(&mut w),
    )?;
    Ok(EnsembleRun { outputs, stats })
}
