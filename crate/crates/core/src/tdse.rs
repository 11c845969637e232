//! 1D time-dependent Schrödinger solver for the two-tweezer
//! splitting/recombining protocol.
//!
//! The potential is a pair of Gaussian wells whose separation follows a
//! cosine schedule while the relative depth ramps to zero, optionally tilted
//! by gravity and a compensation gradient. Propagation is split-step spectral
//! (half-kinetic, full-potential, half-kinetic per step); ground and excited
//! states come from imaginary-time propagation with the same machinery.
//!
//! Internally everything runs in dimensionless units ħ = m = 1 with lengths
//! in units of the waist σ and energies in ħ²/(mσ²); the public interface is
//! SI. The deeper well starts at +d/2, which is also the upper arm when
//! gravity is on.

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::params::PhysicalConstants;
use crate::{invalid_input, Error, Result};

/// Two-tweezer splitting protocol, SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapProtocol {
    /// Trap depth V₀ (J).
    pub v0_j: f64,
    /// Beam waist σ (m).
    pub sigma_m: f64,
    /// Initial (largest) trap separation (m).
    pub d_max_m: f64,
    /// Closest trap separation (m).
    pub d_min_m: f64,
    /// Initial relative depth difference Δ_max (dimensionless).
    pub delta_max: f64,
    /// Total splitting time T (s).
    pub t_split_s: f64,
    /// Include the m·g·x tilt.
    pub gravity: bool,
    /// Linear compensation potential slope (J/m); −m·g cancels gravity.
    #[serde(default)]
    pub compensation_gradient_j_per_m: f64,
    /// Atomic mass (kg).
    pub mass_kg: f64,
    /// Run the schedules backwards (the combiner).
    #[serde(default)]
    pub reversed: bool,
}

impl TrapProtocol {
    /// Baseline protocol: ¹⁷¹Yb in 300 µK tweezers with σ = 1 µm, splitting
    /// from 5σ down to 0.8σ. The closest approach sits below the two-well
    /// merge point (d = σ) so the ground-state doublet keeps a healthy gap,
    /// and the duration is slow enough for >99.9% adiabatic following with
    /// gravity off.
    pub fn default_protocol() -> Self {
        let atom = crate::params::AtomSpec::yb171();
        let consts = PhysicalConstants::codata2018();
        let v0 = consts.k_b * 300e-6;
        let sigma = 1e-6;
        let time_unit = atom.mass_kg * sigma * sigma / consts.hbar;
        Self {
            v0_j: v0,
            sigma_m: sigma,
            d_max_m: 5.0 * sigma,
            d_min_m: 0.8 * sigma,
            delta_max: 0.005,
            t_split_s: 0.2 * time_unit,
            gravity: false,
            compensation_gradient_j_per_m: 0.0,
            mass_kg: atom.mass_kg,
            reversed: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v0_j > 0.0 && self.sigma_m > 0.0 && self.t_split_s > 0.0) {
            return Err(invalid_input("v0, sigma, and t_split must be positive"));
        }
        if !(self.d_max_m > self.d_min_m && self.d_min_m > 0.0) {
            return Err(invalid_input("need d_max > d_min > 0"));
        }
        if !(0.0..1.0).contains(&self.delta_max) {
            return Err(invalid_input("delta_max must lie in [0, 1)"));
        }
        if !(self.mass_kg > 0.0) {
            return Err(invalid_input("mass must be positive"));
        }
        if !self.compensation_gradient_j_per_m.is_finite() {
            return Err(invalid_input("compensation gradient must be finite"));
        }
        Ok(())
    }

    /// The combiner: same trap trajectory with the schedules time-reversed.
    pub fn time_reversed(&self) -> Self {
        let mut p = self.clone();
        p.reversed = !p.reversed;
        p
    }

    fn schedule_time(&self, t: f64) -> f64 {
        if self.reversed {
            self.t_split_s - t
        } else {
            t
        }
    }
}

/// Separation schedule d(t) = ½(d_max+d_min) + ½(d_max−d_min)·cos(2πt/T) (m).
pub fn separation_schedule(t: f64, p: &TrapProtocol) -> Result<f64> {
    if !(0.0..=p.t_split_s).contains(&t) {
        return Err(invalid_input("t outside [0, t_split]"));
    }
    let t = p.schedule_time(t);
    let mid = 0.5 * (p.d_max_m + p.d_min_m);
    let half_span = 0.5 * (p.d_max_m - p.d_min_m);
    Ok(mid + half_span * (std::f64::consts::TAU * t / p.t_split_s).cos())
}

/// Relative-depth schedule Δ(t) = Δ_max(1 − 2t/T) for t < T/2, zero after.
pub fn detuning_schedule(t: f64, p: &TrapProtocol) -> Result<f64> {
    if !(0.0..=p.t_split_s).contains(&t) {
        return Err(invalid_input("t outside [0, t_split]"));
    }
    let t = p.schedule_time(t);
    if t < 0.5 * p.t_split_s {
        Ok(p.delta_max * (1.0 - 2.0 * t / p.t_split_s))
    } else {
        Ok(0.0)
    }
}

/// Trap potential at position x and time t (J): a pair of Gaussian wells with
/// the deeper one at +d/2, plus the optional gravity tilt and compensation
/// gradient.
pub fn potential(x: f64, t: f64, p: &TrapProtocol) -> Result<f64> {
    let d = separation_schedule(t, p)?;
    let delta = detuning_schedule(t, p)?;
    let well = |center: f64| {
        let u = (x - center) / p.sigma_m;
        (-2.0 * u * u).exp()
    };
    let mut v = -p.v0_j * (well(d / 2.0) + (1.0 - delta) * well(-d / 2.0));
    if p.gravity {
        v += p.mass_kg * PhysicalConstants::codata2018().g_earth * x;
    }
    v += p.compensation_gradient_j_per_m * x;
    Ok(v)
}

/// Largest relative depth difference before the shallow well's ground state
/// crosses the deep well's first vibrational level: Δ·V₀ < ħω with ω from the
/// harmonic expansion of a single Gaussian well.
pub fn max_detuning_before_crossing(p: &TrapProtocol) -> f64 {
    let hbar = PhysicalConstants::codata2018().hbar;
    let omega = (4.0 * p.v0_j / (p.mass_kg * p.sigma_m * p.sigma_m)).sqrt();
    hbar * omega / p.v0_j
}

/// Spatial grid and time step, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid1D {
    pub x_min_m: f64,
    pub x_max_m: f64,
    /// Number of grid points; must be a power of two.
    pub n_points: usize,
    /// Time step (s); must satisfy dt < 2πħ/(10·V₀).
    pub dt_s: f64,
}

impl Grid1D {
    /// Default grid for a protocol: ±(d_max/2 + 6σ) at 2048 points, with the
    /// time step at half the stability bound.
    pub fn default_for(p: &TrapProtocol) -> Self {
        let half_span = p.d_max_m / 2.0 + 6.0 * p.sigma_m;
        Self {
            x_min_m: -half_span,
            x_max_m: half_span,
            n_points: 2048,
            dt_s: 0.5 * stability_bound(p),
        }
    }

    pub fn validate_for(&self, p: &TrapProtocol) -> Result<()> {
        if !self.n_points.is_power_of_two() || self.n_points < 16 {
            return Err(invalid_input("n_points must be a power of two (≥ 16)"));
        }
        if !(self.x_max_m > self.x_min_m) {
            return Err(invalid_input("x_max must exceed x_min"));
        }
        let span = self.x_max_m - self.x_min_m;
        if span < p.d_max_m + 6.0 * p.sigma_m {
            return Err(invalid_input(
                "grid span must cover d_max plus a 6σ margin",
            ));
        }
        if !(self.dt_s > 0.0) || self.dt_s >= stability_bound(p) {
            return Err(invalid_input(
                "dt must be positive and below 2πħ/(10·V₀)",
            ));
        }
        Ok(())
    }
}

/// Stability heuristic for the time step: 2πħ/(10·V₀).
pub fn stability_bound(p: &TrapProtocol) -> f64 {
    std::f64::consts::TAU * PhysicalConstants::codata2018().hbar / (10.0 * p.v0_j)
}

/// Spatial wavefunction sampled on the grid. `dx` is in waist units; the
/// discrete norm Σ|ψ|²·dx stays at 1 throughout evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction1D {
    pub samples: Vec<C64>,
    pub dx: f64,
}

impl WaveFunction1D {
    pub fn norm(&self) -> f64 {
        (self.samples.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.dx).sqrt()
    }

    fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            let inv = 1.0 / n;
            for a in &mut self.samples {
                *a *= inv;
            }
        }
    }

    /// ⟨self|other⟩ with the grid measure.
    pub fn inner(&self, other: &WaveFunction1D) -> C64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a.conj() * b)
            .sum::<C64>()
            * self.dx
    }

    /// |⟨self|other⟩|².
    pub fn overlap(&self, other: &WaveFunction1D) -> f64 {
        self.inner(other).norm_sqr()
    }
}

/// Populations (upper arm x > 0, lower arm x < 0); a grid point exactly at
/// x = 0 contributes half to each.
pub fn arm_populations(psi: &WaveFunction1D, grid: &Grid1D) -> (f64, f64) {
    let n = psi.samples.len();
    let x_min = grid.x_min_m;
    let dx_m = (grid.x_max_m - grid.x_min_m) / n as f64;
    let mut upper = 0.0;
    let mut lower = 0.0;
    for (i, a) in psi.samples.iter().enumerate() {
        let x = x_min + i as f64 * dx_m;
        let w = a.norm_sqr() * psi.dx;
        if x > 0.0 {
            upper += w;
        } else if x < 0.0 {
            lower += w;
        } else {
            upper += 0.5 * w;
            lower += 0.5 * w;
        }
    }
    (upper, lower)
}

/// Snapshots of an evolution, including t = 0 and t = t_split.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times_s: Vec<f64>,
    pub snapshots: Vec<WaveFunction1D>,
    pub n_steps: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &WaveFunction1D {
        self.snapshots.last().expect("trajectory is never empty")
    }
}

const GROUND_STATE_MAX_STEPS: usize = 400_000;
const NORM_DRIFT_ABORT: f64 = 1e-6;
/// Default number of evolution snapshots (plus the initial state).
pub const DEFAULT_SNAPSHOTS: usize = 64;

/// Everything in ħ = m = 1 units with lengths in σ.
struct ScaledSystem {
    v0: f64,
    d_max: f64,
    d_min: f64,
    delta_max: f64,
    t_split: f64,
    tilt: f64,
    reversed: bool,
    x: Vec<f64>,
    dx: f64,
    dt: f64,
    k_sq_half: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl ScaledSystem {
    fn new(p: &TrapProtocol, grid: &Grid1D) -> Result<Self> {
        p.validate()?;
        grid.validate_for(p)?;
        let consts = PhysicalConstants::codata2018();
        let sigma = p.sigma_m;
        let energy_unit = consts.hbar * consts.hbar / (p.mass_kg * sigma * sigma);
        let time_unit = consts.hbar / energy_unit;

        let n = grid.n_points;
        let x_min = grid.x_min_m / sigma;
        let span = (grid.x_max_m - grid.x_min_m) / sigma;
        let dx = span / n as f64;
        let x: Vec<f64> = (0..n).map(|i| x_min + i as f64 * dx).collect();

        let dk = std::f64::consts::TAU / span;
        let k_sq_half: Vec<f64> = (0..n)
            .map(|i| {
                let j = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
                let k = dk * j;
                0.5 * k * k
            })
            .collect();

        let mut tilt = p.compensation_gradient_j_per_m * sigma / energy_unit;
        if p.gravity {
            tilt += p.mass_kg * consts.g_earth * sigma / energy_unit;
        }

        let mut planner = FftPlanner::new();
        Ok(Self {
            v0: p.v0_j / energy_unit,
            d_max: p.d_max_m / sigma,
            d_min: p.d_min_m / sigma,
            delta_max: p.delta_max,
            t_split: p.t_split_s / time_unit,
            tilt,
            reversed: p.reversed,
            x,
            dx,
            dt: grid.dt_s / time_unit,
            k_sq_half,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
        })
    }

    fn schedule_time(&self, t: f64) -> f64 {
        if self.reversed {
            self.t_split - t
        } else {
            t
        }
    }

    fn separation(&self, t: f64) -> f64 {
        let t = self.schedule_time(t);
        let mid = 0.5 * (self.d_max + self.d_min);
        let half_span = 0.5 * (self.d_max - self.d_min);
        mid + half_span * (std::f64::consts::TAU * t / self.t_split).cos()
    }

    fn detuning(&self, t: f64) -> f64 {
        let t = self.schedule_time(t);
        if t < 0.5 * self.t_split {
            self.delta_max * (1.0 - 2.0 * t / self.t_split)
        } else {
            0.0
        }
    }

    /// Fill `out` with V(x, t). Gaussian tails beyond 4.5σ underflow the
    /// double-well contribution and are skipped.
    fn potential_at(&self, t: f64, out: &mut [f64]) {
        let d = self.separation(t);
        let delta = self.detuning(t);
        let c_plus = d / 2.0;
        let c_minus = -d / 2.0;
        let shallow = 1.0 - delta;
        for (v, &x) in out.iter_mut().zip(&self.x) {
            let mut val = self.tilt * x;
            let u = x - c_plus;
            if u.abs() < 4.5 {
                val -= self.v0 * (-2.0 * u * u).exp();
            }
            let u = x - c_minus;
            if u.abs() < 4.5 {
                val -= self.v0 * shallow * (-2.0 * u * u).exp();
            }
            *v = val;
        }
    }

    fn apply_kinetic_phases(&self, psi: &mut [C64], phases: &[C64]) {
        self.fft.process(psi);
        for (a, ph) in psi.iter_mut().zip(phases) {
            *a *= ph;
        }
        self.ifft.process(psi);
        let scale = 1.0 / psi.len() as f64;
        for a in psi.iter_mut() {
            *a *= scale;
        }
    }

    fn kinetic_phases(&self, dt: f64) -> Vec<C64> {
        self.k_sq_half
            .iter()
            .map(|&ks| C64::from_polar(1.0, -ks * dt))
            .collect()
    }

    fn kinetic_decay(&self, dtau: f64) -> Vec<C64> {
        self.k_sq_half
            .iter()
            .map(|&ks| C64::new((-ks * dtau).exp(), 0.0))
            .collect()
    }

    /// ⟨ψ|H(t)|ψ⟩ for a normalized ψ.
    fn energy(&self, psi: &WaveFunction1D, v: &[f64]) -> f64 {
        let mut momentum = psi.samples.clone();
        self.fft.process(&mut momentum);
        let n = momentum.len() as f64;
        let kinetic: f64 = momentum
            .iter()
            .zip(&self.k_sq_half)
            .map(|(a, &ks)| ks * a.norm_sqr())
            .sum::<f64>()
            * psi.dx
            / n;
        let pot: f64 = psi
            .samples
            .iter()
            .zip(v)
            .map(|(a, &vi)| vi * a.norm_sqr())
            .sum::<f64>()
            * psi.dx;
        kinetic + pot
    }

    fn gaussian(&self, center: f64, width: f64) -> WaveFunction1D {
        let samples = self
            .x
            .iter()
            .map(|&x| {
                let u = (x - center) / width;
                C64::new((-0.25 * u * u).exp(), 0.0)
            })
            .collect();
        let mut psi = WaveFunction1D {
            samples,
            dx: self.dx,
        };
        psi.normalize();
        psi
    }

    /// Imaginary-time relaxation of `states` (kept mutually orthonormal)
    /// under the frozen potential `v`. Converges when every state's energy
    /// moves by less than `tol` per step. Returns the energies.
    fn relax(&self, states: &mut [WaveFunction1D], v: &[f64], tol: f64) -> Result<Vec<f64>> {
        let dtau = self.dt;
        let kin_half = self.kinetic_decay(dtau / 2.0);
        let decay: Vec<f64> = v.iter().map(|&vi| (-vi * dtau).exp()).collect();
        let mut energies: Vec<f64> = states.iter().map(|s| self.energy(s, v)).collect();
        let check_every = 16usize;
        for iter in 0..GROUND_STATE_MAX_STEPS {
            for idx in 0..states.len() {
                {
                    let psi = &mut states[idx];
                    self.apply_kinetic_phases(&mut psi.samples, &kin_half);
                    for (a, &dcy) in psi.samples.iter_mut().zip(&decay) {
                        *a *= dcy;
                    }
                    self.apply_kinetic_phases(&mut psi.samples, &kin_half);
                }
                // Gram-Schmidt against the lower states.
                for lower in 0..idx {
                    let proj = states[lower].inner(&states[idx]);
                    let (lo, hi) = states.split_at_mut(idx);
                    for (a, b) in hi[0].samples.iter_mut().zip(&lo[lower].samples) {
                        *a -= proj * b;
                    }
                }
                states[idx].normalize();
            }
            if (iter + 1) % check_every == 0 {
                let new: Vec<f64> = states.iter().map(|s| self.energy(s, v)).collect();
                let worst = new
                    .iter()
                    .zip(&energies)
                    .map(|(a, b)| (a - b).abs() / check_every as f64)
                    .fold(0.0f64, f64::max);
                energies = new;
                if worst < tol {
                    return Ok(energies);
                }
            }
        }
        Err(Error::Solver(format!(
            "imaginary-time relaxation did not converge within {GROUND_STATE_MAX_STEPS} steps"
        )))
    }

    /// Lowest `count` eigenstates of the potential frozen at time `t`,
    /// optionally warm-started.
    fn eigenstates_at(
        &self,
        t: f64,
        count: usize,
        warm: Option<&[WaveFunction1D]>,
    ) -> Result<Vec<WaveFunction1D>> {
        let mut v = vec![0.0; self.x.len()];
        self.potential_at(t, &mut v);
        let mut states: Vec<WaveFunction1D> = match warm {
            Some(prev) => prev.to_vec(),
            None => {
                let d = self.separation(t);
                let omega = 2.0 * self.v0.sqrt();
                let width = (1.0 / omega.sqrt()).min(0.5);
                // Localized seeds, one per well; extra states get wider seeds.
                (0..count)
                    .map(|k| {
                        let center = match k {
                            0 => d / 2.0,
                            1 => -d / 2.0,
                            _ => 0.0,
                        };
                        self.gaussian(center, width * (1.0 + k as f64))
                    })
                    .collect()
            }
        };
        let tol = 1e-12 * self.v0;
        self.relax(&mut states, &v, tol)?;
        Ok(states)
    }
}

/// Ground state of the t = 0 potential via imaginary-time propagation,
/// converged to 10⁻¹²·V₀ per step.
pub fn ground_state(p: &TrapProtocol, grid: &Grid1D) -> Result<WaveFunction1D> {
    let sys = ScaledSystem::new(p, grid)?;
    let mut v = vec![0.0; sys.x.len()];
    sys.potential_at(0.0, &mut v);
    let d = sys.separation(0.0);
    let omega = 2.0 * sys.v0.sqrt();
    let width = (1.0 / omega.sqrt()).min(0.5);
    let mut seed = if sys.detuning(0.0) > 0.0 || sys.tilt.abs() > 0.0 {
        // Asymmetric trap: seed in the deeper (+d/2) well; a symmetric
        // admixture relaxes out quickly.
        sys.gaussian(d / 2.0, width)
    } else {
        // Symmetric trap: seed with the even combination so the projection
        // stays in the even sector.
        let a = sys.gaussian(d / 2.0, width);
        let b = sys.gaussian(-d / 2.0, width);
        let mut combo = a;
        for (s, o) in combo.samples.iter_mut().zip(&b.samples) {
            *s += o;
        }
        combo.normalize();
        combo
    };
    sys.relax(std::slice::from_mut(&mut seed), &v, 1e-12 * sys.v0)?;
    Ok(seed)
}

/// Propagate through the full protocol, recording `n_snapshots` evenly spaced
/// snapshots after the initial state.
pub fn evolve_with_snapshots(
    psi0: &WaveFunction1D,
    p: &TrapProtocol,
    grid: &Grid1D,
    n_snapshots: usize,
) -> Result<Trajectory> {
    let sys = ScaledSystem::new(p, grid)?;
    if psi0.samples.len() != sys.x.len() {
        return Err(invalid_input("wavefunction does not match the grid"));
    }
    if (psi0.norm() - 1.0).abs() > 1e-8 {
        return Err(invalid_input("initial state must be normalized"));
    }
    let n_snapshots = n_snapshots.max(1);
    let steps_per_segment =
        ((sys.t_split / sys.dt / n_snapshots as f64).ceil() as usize).max(1);
    let n_steps = steps_per_segment * n_snapshots;
    let dt = sys.t_split / n_steps as f64;

    let kin_half = sys.kinetic_phases(dt / 2.0);
    let kin_full = sys.kinetic_phases(dt);
    let mut v = vec![0.0; sys.x.len()];

    let consts = PhysicalConstants::codata2018();
    let time_unit = p.mass_kg * p.sigma_m * p.sigma_m / consts.hbar;

    let mut psi = psi0.clone();
    let mut times_s = vec![0.0];
    let mut snapshots = vec![psi.clone()];

    for segment in 0..n_snapshots {
        sys.apply_kinetic_phases(&mut psi.samples, &kin_half);
        for step in 0..steps_per_segment {
            let global = segment * steps_per_segment + step;
            let t_mid = (global as f64 + 0.5) * dt;
            sys.potential_at(t_mid, &mut v);
            for (a, &vi) in psi.samples.iter_mut().zip(&v) {
                *a *= C64::from_polar(1.0, -vi * dt);
            }
            if step + 1 == steps_per_segment {
                sys.apply_kinetic_phases(&mut psi.samples, &kin_half);
            } else {
                sys.apply_kinetic_phases(&mut psi.samples, &kin_full);
            }
        }
        let norm = psi.norm();
        if (norm - 1.0).abs() > NORM_DRIFT_ABORT {
            return Err(Error::Solver(format!(
                "norm drifted to {norm} at snapshot {segment}; reduce dt"
            )));
        }
        let t = (segment + 1) as f64 * steps_per_segment as f64 * dt;
        times_s.push(t * time_unit);
        snapshots.push(psi.clone());
    }

    Ok(Trajectory {
        times_s,
        snapshots,
        n_steps,
    })
}

/// Propagate through the full protocol with the default snapshot count.
pub fn evolve(psi0: &WaveFunction1D, p: &TrapProtocol, grid: &Grid1D) -> Result<Trajectory> {
    evolve_with_snapshots(psi0, p, grid, DEFAULT_SNAPSHOTS)
}

/// Population of each snapshot in the span of the two lowest instantaneous
/// eigenstates of the frozen potential.
pub fn adiabaticity_profile(
    trajectory: &Trajectory,
    p: &TrapProtocol,
    grid: &Grid1D,
) -> Result<Vec<f64>> {
    if trajectory.snapshots.is_empty() {
        return Err(invalid_input("trajectory is empty"));
    }
    let sys = ScaledSystem::new(p, grid)?;
    let consts = PhysicalConstants::codata2018();
    let time_unit = p.mass_kg * p.sigma_m * p.sigma_m / consts.hbar;
    let mut warm: Option<Vec<WaveFunction1D>> = None;
    let mut profile = Vec::with_capacity(trajectory.snapshots.len());
    for (t_s, psi) in trajectory.times_s.iter().zip(&trajectory.snapshots) {
        let t = t_s / time_unit;
        let pair = sys.eigenstates_at(t, 2, warm.as_deref())?;
        let population: f64 = pair.iter().map(|e| e.overlap(psi)).sum();
        profile.push(population.min(1.0));
        warm = Some(pair);
    }
    Ok(profile)
}

/// Minimum over the trajectory of the population in the two lowest
/// instantaneous eigenstates; 1 means perfect adiabatic following.
pub fn adiabaticity(trajectory: &Trajectory, p: &TrapProtocol, grid: &Grid1D) -> Result<f64> {
    Ok(adiabaticity_profile(trajectory, p, grid)?
        .into_iter()
        .fold(1.0f64, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_protocol() -> TrapProtocol {
        // Shallower and smaller than the default so unit tests stay fast.
        let mut p = TrapProtocol::default_protocol();
        p.v0_j /= 10.0; // 30 µK
        p
    }

    fn quick_grid(p: &TrapProtocol) -> Grid1D {
        let mut g = Grid1D::default_for(p);
        g.n_points = 1024;
        g
    }

    #[test]
    fn schedules_hit_their_endpoints() {
        let p = TrapProtocol::default_protocol();
        let t_half = p.t_split_s / 2.0;
        assert!((separation_schedule(0.0, &p).unwrap() - p.d_max_m).abs() < 1e-18);
        assert!((separation_schedule(t_half, &p).unwrap() - p.d_min_m).abs() < 1e-18);
        assert!((separation_schedule(p.t_split_s, &p).unwrap() - p.d_max_m).abs() < 1e-18);
        assert_eq!(detuning_schedule(0.0, &p).unwrap(), p.delta_max);
        assert_eq!(detuning_schedule(t_half, &p).unwrap(), 0.0);
        assert_eq!(detuning_schedule(p.t_split_s, &p).unwrap(), 0.0);
        assert!(separation_schedule(-1e-9, &p).is_err());
        assert!(detuning_schedule(p.t_split_s * 1.001, &p).is_err());
    }

    #[test]
    fn schedules_are_smooth_where_claimed() {
        let p = TrapProtocol::default_protocol();
        let t_half = p.t_split_s / 2.0;
        let h = p.t_split_s * 1e-7;
        // d is C¹ at T/2 (cosine extremum): symmetric difference slope ≈ 0.
        let slope = (separation_schedule(t_half + h, &p).unwrap()
            - separation_schedule(t_half - h, &p).unwrap())
            / (2.0 * h);
        assert!(slope.abs() < 1e-3 * p.d_max_m / p.t_split_s);
        // Δ is continuous at T/2 but kinked.
        let before = detuning_schedule(t_half - h, &p).unwrap();
        assert!(before.abs() < 1e-5 * p.delta_max);
    }

    #[test]
    fn reversed_schedules_mirror_forward_ones() {
        let p = TrapProtocol::default_protocol();
        let r = p.time_reversed();
        for frac in [0.0, 0.2, 0.5, 0.8, 1.0] {
            let t = frac * p.t_split_s;
            let t_mirror = p.t_split_s - t;
            assert!(
                (separation_schedule(t, &r).unwrap()
                    - separation_schedule(t_mirror, &p).unwrap())
                .abs()
                    < 1e-15
            );
            assert!(
                (detuning_schedule(t, &r).unwrap()
                    - detuning_schedule(t_mirror, &p).unwrap())
                .abs()
                    < 1e-15
            );
        }
    }

    #[test]
    fn potential_shape() {
        let mut p = TrapProtocol::default_protocol();
        p.delta_max = 0.0;
        // Symmetric double well when gravity is off.
        for x in [0.1e-6, 0.7e-6, 2.3e-6] {
            let a = potential(x, 0.0, &p).unwrap();
            let b = potential(-x, 0.0, &p).unwrap();
            assert!((a - b).abs() < 1e-12 * p.v0_j);
        }
        // With detuning, the +d/2 well is deeper by ≈ V₀·Δ_max.
        p.delta_max = 0.005;
        let d = p.d_max_m;
        let deep = potential(d / 2.0, 0.0, &p).unwrap();
        let shallow = potential(-d / 2.0, 0.0, &p).unwrap();
        let difference = shallow - deep;
        assert!(
            (difference - p.delta_max * p.v0_j).abs() < 0.01 * p.delta_max * p.v0_j,
            "difference {difference:e}"
        );
        // Gravity adds m·g·d between the wells.
        let mut pg = p.clone();
        pg.gravity = true;
        let tilt = (potential(d / 2.0, 0.0, &pg).unwrap() - deep)
            - (potential(-d / 2.0, 0.0, &pg).unwrap() - shallow);
        let expect = pg.mass_kg * 9.80665 * d;
        assert!((tilt - expect).abs() < 1e-6 * expect.abs());
    }

    #[test]
    fn ground_state_of_a_single_well_is_nearly_harmonic() {
        // Decoupled wells: park the partner 16σ away and make it shallow.
        let mut p = quick_protocol();
        p.d_max_m = 16.0 * p.sigma_m;
        p.d_min_m = 15.0 * p.sigma_m;
        p.delta_max = 0.9;
        let mut grid = Grid1D::default_for(&p);
        grid.n_points = 2048;
        let psi = ground_state(&p, &grid).unwrap();

        let sys = ScaledSystem::new(&p, &grid).unwrap();
        let mut v = vec![0.0; sys.x.len()];
        sys.potential_at(0.0, &mut v);
        let energy = sys.energy(&psi, &v);
        // Bottom of the deep well sits at −V₀ (up to the far partner's tail);
        // the level above it is ħω/2 with ω = 2√V₀, within the anharmonic
        // correction.
        let omega = 2.0 * sys.v0.sqrt();
        let above_bottom = energy + sys.v0;
        assert!(
            (above_bottom - omega / 2.0).abs() < 0.05 * (omega / 2.0),
            "E + V₀ = {above_bottom}, ħω/2 = {}",
            omega / 2.0
        );
    }

    #[test]
    fn symmetric_ground_state_is_even() {
        let mut p = quick_protocol();
        p.delta_max = 0.0;
        let grid = quick_grid(&p);
        let psi = ground_state(&p, &grid).unwrap();
        let sys = ScaledSystem::new(&p, &grid).unwrap();
        let mean_x: f64 = psi
            .samples
            .iter()
            .zip(&sys.x)
            .map(|(a, &x)| x * a.norm_sqr())
            .sum::<f64>()
            * psi.dx;
        assert!(mean_x.abs() < 1e-8 * sys.d_max, "⟨x⟩ = {mean_x}");
        let (up, lo) = arm_populations(&psi, &grid);
        assert!((up - 0.5).abs() < 1e-8 && (lo - 0.5).abs() < 1e-8);
    }

    #[test]
    fn detuned_ground_state_localizes_in_the_deep_well() {
        let p = quick_protocol();
        let grid = quick_grid(&p);
        let psi = ground_state(&p, &grid).unwrap();
        let (upper, lower) = arm_populations(&psi, &grid);
        // Deep well is at +d/2.
        assert!(upper > 0.99, "upper population {upper}");
        assert!((upper + lower - 1.0).abs() < 1e-8);
    }

    #[test]
    fn stationary_state_stays_put() {
        // Freeze the protocol by making the motion span negligible.
        let mut p = quick_protocol();
        p.d_min_m = p.d_max_m * (1.0 - 1e-12);
        p.delta_max = 0.0;
        p.t_split_s /= 8.0;
        let grid = quick_grid(&p);
        let psi0 = ground_state(&p, &grid).unwrap();
        let traj = evolve_with_snapshots(&psi0, &p, &grid, 4).unwrap();
        let overlap = psi0.overlap(traj.final_state());
        assert!(overlap > 1.0 - 1e-6, "overlap {overlap}");
    }

    #[test]
    fn free_gaussian_disperses_analytically() {
        // V = 0: the split-step propagator is exact, so the evolved width
        // must land on σ(t)² = σ₀²(1 + (t/(2σ₀²))²) to solver precision.
        let p = quick_protocol();
        let mut grid = Grid1D::default_for(&p);
        grid.n_points = 1024;
        let sys = ScaledSystem::new(&p, &grid).unwrap();
        let mut psi = sys.gaussian(0.0, 0.7);
        psi.normalize();

        // Second moment of the initial state.
        let second_moment = |psi: &WaveFunction1D| -> f64 {
            psi.samples
                .iter()
                .zip(&sys.x)
                .map(|(a, &x)| x * x * a.norm_sqr())
                .sum::<f64>()
                * psi.dx
        };
        let s0_sq = second_moment(&psi);

        let t_total = 1.0;
        let dt = sys.dt;
        let steps = (t_total / dt).ceil() as usize;
        let dt = t_total / steps as f64;
        let kin_half = sys.kinetic_phases(dt / 2.0);
        let kin_full = sys.kinetic_phases(dt);
        sys.apply_kinetic_phases(&mut psi.samples, &kin_half);
        for step in 0..steps {
            // V = 0: potential factor is unity.
            if step + 1 == steps {
                sys.apply_kinetic_phases(&mut psi.samples, &kin_half);
            } else {
                sys.apply_kinetic_phases(&mut psi.samples, &kin_full);
            }
        }
        let expect = s0_sq * (1.0 + (t_total / (2.0 * s0_sq)).powi(2));
        let got = second_moment(&psi);
        assert!(
            ((got - expect) / expect).abs() < 1e-6,
            "σ²(t) = {got}, analytic {expect}"
        );
        assert!((psi.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn default_protocol_passes_validation() {
        let p = TrapProtocol::default_protocol();
        p.validate().unwrap();
        let grid = Grid1D::default_for(&p);
        grid.validate_for(&p).unwrap();
        // Δ_max sits below the level-crossing bound.
        assert!(p.delta_max < max_detuning_before_crossing(&p));
    }

    #[test]
    fn grid_validation_catches_misconfiguration() {
        let p = TrapProtocol::default_protocol();
        let mut g = Grid1D::default_for(&p);
        g.n_points = 1000;
        assert!(g.validate_for(&p).is_err());
        let mut g = Grid1D::default_for(&p);
        g.dt_s = stability_bound(&p) * 2.0;
        assert!(g.validate_for(&p).is_err());
        let mut g = Grid1D::default_for(&p);
        g.x_max_m = p.d_max_m / 2.0;
        assert!(g.validate_for(&p).is_err());
        let mut bad = p.clone();
        bad.d_min_m = bad.d_max_m;
        assert!(bad.validate().is_err());
        bad.delta_max = 1.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn norm_is_conserved_through_a_split() {
        let p = quick_protocol();
        let grid = quick_grid(&p);
        let psi0 = ground_state(&p, &grid).unwrap();
        let traj = evolve_with_snapshots(&psi0, &p, &grid, 8).unwrap();
        for snap in &traj.snapshots {
            assert!((snap.norm() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn halving_dt_does_not_move_populations() {
        let mut p = quick_protocol();
        p.t_split_s /= 4.0;
        let grid = quick_grid(&p);
        let psi0 = ground_state(&p, &grid).unwrap();
        let coarse = evolve_with_snapshots(&psi0, &p, &grid, 2).unwrap();
        let mut fine_grid = grid;
        fine_grid.dt_s /= 2.0;
        let fine = evolve_with_snapshots(&psi0, &p, &fine_grid, 2).unwrap();
        let (up_c, _) = arm_populations(coarse.final_state(), &grid);
        let (up_f, _) = arm_populations(fine.final_state(), &fine_grid);
        assert!((up_c - up_f).abs() < 1e-8, "{up_c} vs {up_f}");
    }

    #[test]
    fn parity_is_preserved_without_gravity() {
        let mut p = quick_protocol();
        p.delta_max = 0.0;
        let grid = quick_grid(&p);
        let psi0 = ground_state(&p, &grid).unwrap();
        let traj = evolve_with_snapshots(&psi0, &p, &grid, 4).unwrap();
        let final_state = traj.final_state();
        let n = final_state.samples.len();
        let mut worst = 0.0f64;
        for i in 1..n {
            let direct = final_state.samples[i].norm_sqr();
            let mirrored = final_state.samples[n - i].norm_sqr();
            worst = worst.max((direct - mirrored).abs() * final_state.dx);
        }
        assert!(worst < 1e-8, "parity violation {worst}");
    }
}
