//! Monte Carlo measurement campaigns.
//!
//! A campaign scans `n_durations` phase-accumulation times over one drive
//! period, repeating each duration `n_reps` times with `n_atoms` atoms per
//! run. Tweezer-intensity fluctuations enter as a per-run random shift of the
//! lower-state detuning δ; each atom then yields one joint
//! (exit port × clock state) outcome, since both observables are read out on
//! every atom.
//!
//! Runs draw from independent counter-based streams keyed by
//! (seed, duration index, repetition index), so a table is bit-reproducible
//! from its plan at any worker count.

use rand::Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{self, DOMAIN_DELTA, DOMAIN_RUN};
use crate::sequence::{
    self, collapsed_joint_probabilities, final_state, SequenceParams, E1, E2, G1, G2,
};
use crate::{Error, Result};

/// Distribution of the per-run lower-state detuning shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// δ·T uniform on [0, 2π): the regime where the energy jitter exceeds
    /// 2π/T and the interference phase is fully scrambled.
    UniformPhase,
    /// δ = δ₀ + u with u uniform on [−scale·Δ, +scale·Δ].
    UniformEnergy,
    /// δ = δ₀ + u with u normal with standard deviation scale·Δ.
    GaussianEnergy,
    /// δ = δ₀ exactly.
    None,
}

/// Intensity-fluctuation noise model. `scale` multiplies the drive detuning
/// Δ to give the energy scale of the fluctuations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    #[serde(default = "default_noise_scale")]
    pub scale: f64,
}

fn default_noise_scale() -> f64 {
    1.0
}

impl NoiseModel {
    pub fn uniform_phase() -> Self {
        Self {
            kind: NoiseKind::UniformPhase,
            scale: 1.0,
        }
    }

    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            scale: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale < 0.0 || !self.scale.is_finite() {
            return Err(Error::Config("noise scale must be non-negative".into()));
        }
        Ok(())
    }

    /// Draw the realized lower-state detuning for one run.
    pub fn sample_delta<R: Rng>(
        &self,
        delta0: f64,
        drive_detuning: f64,
        duration: f64,
        rng: &mut R,
    ) -> f64 {
        match self.kind {
            NoiseKind::None => delta0,
            NoiseKind::UniformPhase => {
                // Phase δ·T uniform on [0, 2π); δ₀ is irrelevant once the
                // phase wraps.
                rng.gen::<f64>() * std::f64::consts::TAU / duration
            }
            NoiseKind::UniformEnergy => {
                let span = self.scale * drive_detuning;
                delta0 + rng.gen_range(-span..=span)
            }
            NoiseKind::GaussianEnergy => {
                let sigma = self.scale * drive_detuning;
                let normal = rand_distr::Normal::new(0.0, sigma).expect("finite sigma");
                delta0 + normal.sample(rng)
            }
        }
    }
}

/// Whether δ is redrawn for every run or held fixed within a duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseResampling {
    /// Fresh δ per run: the intensity imbalance is a property of the tweezer
    /// pair during a single run.
    #[default]
    PerRun,
    /// One δ per duration, shared by all repetitions.
    PerDuration,
}

/// Complete description of one measurement campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    /// Atoms per run (N_a).
    pub n_atoms: u32,
    /// Number of scanned durations (N₁).
    pub n_durations: u32,
    /// Repetitions per duration (N₂).
    pub n_reps: u32,
    /// Window start T₀ (s); durations span [T₀, T₀ + 2π/Δ].
    pub t0_s: f64,
    /// Drive detuning Δ (rad/s).
    pub drive_detuning_rad_per_s: f64,
    /// Nominal lower-state detuning δ₀ (rad/s).
    #[serde(default)]
    pub delta0_rad_per_s: f64,
    /// Gravitational redshift ε (rad/s).
    pub epsilon_rad_per_s: f64,
    pub noise: NoiseModel,
    #[serde(default)]
    pub noise_resampling: NoiseResampling,
    /// Top-level stream seed.
    pub seed: u64,
    /// Per-run overhead (s); bookkeeping only, never physics.
    #[serde(default = "default_overhead")]
    pub overhead_s: f64,
}

fn default_overhead() -> f64 {
    5.0
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_atoms < 1 || self.n_durations < 1 || self.n_reps < 1 {
            return Err(Error::Config(
                "n_atoms, n_durations, and n_reps must all be at least 1".into(),
            ));
        }
        if !(self.t0_s > 0.0) || !self.t0_s.is_finite() {
            return Err(Error::Config("t0_s must be positive".into()));
        }
        if !(self.drive_detuning_rad_per_s > 0.0) || !self.drive_detuning_rad_per_s.is_finite() {
            return Err(Error::Config(
                "drive detuning must be positive (it sets the scan window 2π/Δ)".into(),
            ));
        }
        if !self.delta0_rad_per_s.is_finite() || !self.epsilon_rad_per_s.is_finite() {
            return Err(Error::Config("detunings must be finite".into()));
        }
        if !self.overhead_s.is_finite() || self.overhead_s < 0.0 {
            return Err(Error::Config("overhead must be non-negative".into()));
        }
        self.noise.validate()
    }

    /// The N₁ evenly spaced durations spanning [T₀, T₀ + 2π/Δ].
    pub fn durations(&self) -> Vec<f64> {
        let period = std::f64::consts::TAU / self.drive_detuning_rad_per_s;
        let n = self.n_durations as usize;
        if n == 1 {
            return vec![self.t0_s];
        }
        (0..n)
            .map(|k| self.t0_s + period * k as f64 / (n - 1) as f64)
            .collect()
    }

    /// Midpoint of the duration window, used as the reference time when
    /// inverting the visibility.
    pub fn t_ref(&self) -> f64 {
        self.t0_s + std::f64::consts::PI / self.drive_detuning_rad_per_s
    }

    /// Sequence parameters for one run at duration `t` with realized
    /// detuning δ.
    pub fn sequence_params(&self, duration: f64, delta: f64) -> SequenceParams {
        SequenceParams {
            duration_s: duration,
            drive_detuning_rad_per_s: self.drive_detuning_rad_per_s,
            lower_detuning_rad_per_s: delta,
            redshift_rad_per_s: self.epsilon_rad_per_s,
            drive_frequency_rad_per_s: 0.0,
        }
    }

    /// Simulated wall-clock budget N₁·N₂·(T̄ + overhead) in seconds.
    pub fn runtime_budget_s(&self) -> f64 {
        let durations = self.durations();
        let mean_t = durations.iter().sum::<f64>() / durations.len() as f64;
        (self.n_durations as f64) * (self.n_reps as f64) * (mean_t + self.overhead_s)
    }
}

/// Outcome counts and estimators for a single run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Joint outcome counts in basis order (g;1, g;2, e;1, e;2).
    pub counts: [u64; 4],
    /// Estimator of the upper-port probability.
    pub p1_hat: f64,
    /// Estimator of the clock-ground-state probability.
    pub pg_hat: f64,
    /// The δ realized for this run (rad/s).
    pub delta_realized: f64,
}

/// Draw `n_atoms` joint outcomes from a 4-way categorical distribution.
pub fn sample_counts<R: Rng>(probs: &[f64; 4], n_atoms: u32, rng: &mut R) -> [u64; 4] {
    let mut counts = [0u64; 4];
    for _ in 0..n_atoms {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut outcome = 3;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                outcome = k;
                break;
            }
        }
        counts[outcome] += 1;
    }
    counts
}

fn run_from_probs<R: Rng>(
    probs: &[f64; 4],
    n_atoms: u32,
    delta_realized: f64,
    rng: &mut R,
) -> RunResult {
    let counts = sample_counts(probs, n_atoms, rng);
    let n = n_atoms as f64;
    RunResult {
        counts,
        p1_hat: (counts[G1] + counts[E1]) as f64 / n,
        pg_hat: (counts[G1] + counts[G2]) as f64 / n,
        delta_realized,
    }
}

/// Simulate one coherent run: exact joint probabilities from the final state,
/// then `n_atoms` independent categorical draws.
pub fn sample_run<R: Rng>(p: &SequenceParams, n_atoms: u32, rng: &mut R) -> RunResult {
    let probs = final_state(p).joint_probabilities();
    run_from_probs(&probs, n_atoms, p.lower_detuning_rad_per_s, rng)
}

/// Simulate one run in which the wavepacket collapses to a single arm right
/// after splitting. Port outcomes are even odds by construction; clock-state
/// outcomes follow the single-arm Ramsey probabilities of the collapsed arm.
pub fn incoherent_run<R: Rng>(p: &SequenceParams, n_atoms: u32, rng: &mut R) -> RunResult {
    let probs = collapsed_joint_probabilities(p);
    run_from_probs(&probs, n_atoms, p.lower_detuning_rad_per_s, rng)
}

/// Whether the splitter keeps spatial coherence or collapses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitModel {
    Coherent,
    Collapsed,
}

/// Complete N₁ × N₂ grid of run results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleTable {
    pub durations_s: Vec<f64>,
    pub n_atoms: u32,
    pub n_reps: u32,
    /// Duration-major: `rows[i * n_reps + j]` is repetition j of duration i.
    pub rows: Vec<RunResult>,
}

/// Per-duration aggregate of an ensemble table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DurationSummary {
    pub duration_index: usize,
    pub duration_s: f64,
    pub pg_mean: f64,
    pub pg_stderr: f64,
    pub p1_mean: f64,
    pub p1_stderr: f64,
}

/// Compact JSON summary of a campaign.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_atoms: u32,
    pub n_reps: u32,
    pub per_duration: Vec<DurationSummary>,
    pub runtime_budget_s: Option<f64>,
}

impl EnsembleTable {
    pub fn run(&self, duration_index: usize, rep: usize) -> &RunResult {
        &self.rows[duration_index * self.n_reps as usize + rep]
    }

    pub fn p1_hats(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.p1_hat).collect()
    }

    fn column_stats(&self, select: impl Fn(&RunResult) -> f64, i: usize) -> (f64, f64) {
        let n = self.n_reps as usize;
        let vals: Vec<f64> = (0..n).map(|j| select(self.run(i, j))).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return (mean, 0.0);
        }
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (mean, (var / n as f64).sqrt())
    }

    pub fn summary(&self) -> EnsembleSummary {
        let per_duration = (0..self.durations_s.len())
            .map(|i| {
                let (pg_mean, pg_stderr) = self.column_stats(|r| r.pg_hat, i);
                let (p1_mean, p1_stderr) = self.column_stats(|r| r.p1_hat, i);
                DurationSummary {
                    duration_index: i,
                    duration_s: self.durations_s[i],
                    pg_mean,
                    pg_stderr,
                    p1_mean,
                    p1_stderr,
                }
            })
            .collect();
        EnsembleSummary {
            n_atoms: self.n_atoms,
            n_reps: self.n_reps,
            per_duration,
            runtime_budget_s: None,
        }
    }

    /// Write the table as CSV with one row per run. Floats carry 17
    /// significant digits so the table round-trips exactly.
    pub fn to_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "duration_index",
            "T_s",
            "rep",
            "n_g1",
            "n_g2",
            "n_e1",
            "n_e2",
            "p1_hat",
            "pg_hat",
            "delta_realized_rad_per_s",
        ])?;
        for (i, &t) in self.durations_s.iter().enumerate() {
            for j in 0..self.n_reps as usize {
                let r = self.run(i, j);
                w.write_record([
                    i.to_string(),
                    format_float(t),
                    j.to_string(),
                    r.counts[G1].to_string(),
                    r.counts[G2].to_string(),
                    r.counts[E1].to_string(),
                    r.counts[E2].to_string(),
                    format_float(r.p1_hat),
                    format_float(r.pg_hat),
                    format_float(r.delta_realized),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Parse a table written by [`EnsembleTable::to_csv`]. Strict: the grid
    /// must be complete, in order, and internally consistent.
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut durations_s: Vec<f64> = Vec::new();
        let mut rows: Vec<RunResult> = Vec::new();
        let mut n_atoms: Option<u64> = None;
        let mut n_reps: Option<usize> = None;
        let mut current_rep = 0usize;

        for record in r.records() {
            let record = record?;
            if record.len() != 10 {
                return Err(Error::Config(format!(
                    "expected 10 columns, found {}",
                    record.len()
                )));
            }
            let field = |k: usize| record.get(k).unwrap_or_default();
            let idx: usize = field(0)
                .parse()
                .map_err(|e| Error::Config(format!("bad duration_index: {e}")))?;
            let t: f64 = parse_float(field(1))?;
            let rep: usize = field(2)
                .parse()
                .map_err(|e| Error::Config(format!("bad rep: {e}")))?;
            let mut counts = [0u64; 4];
            for (slot, k) in counts.iter_mut().zip(3..7) {
                *slot = field(k)
                    .parse()
                    .map_err(|e| Error::Config(format!("bad count: {e}")))?;
            }
            let p1_hat = parse_float(field(7))?;
            let pg_hat = parse_float(field(8))?;
            let delta_realized = parse_float(field(9))?;

            let total: u64 = counts.iter().sum();
            match n_atoms {
                Some(n) if n != total => {
                    return Err(Error::Config("counts do not sum to a constant n_atoms".into()))
                }
                None => n_atoms = Some(total),
                _ => {}
            }

            if idx == durations_s.len() {
                // First row of a new duration block.
                if idx > 0 {
                    match n_reps {
                        Some(n) if n != current_rep => {
                            return Err(Error::Config("ragged repetition grid".into()))
                        }
                        None => n_reps = Some(current_rep),
                        _ => {}
                    }
                }
                if rep != 0 {
                    return Err(Error::Config("repetitions must start at 0".into()));
                }
                durations_s.push(t);
                current_rep = 0;
            } else if idx + 1 != durations_s.len() {
                return Err(Error::Config("duration blocks must be contiguous".into()));
            } else if t != durations_s[idx] {
                return Err(Error::Config("inconsistent duration within a block".into()));
            }
            if rep != current_rep {
                return Err(Error::Config("repetitions must be contiguous".into()));
            }
            current_rep += 1;
            rows.push(RunResult {
                counts,
                p1_hat,
                pg_hat,
                delta_realized,
            });
        }

        if durations_s.is_empty() {
            return Err(Error::Config("empty ensemble table".into()));
        }
        let reps = match n_reps {
            Some(n) if n != current_rep => {
                return Err(Error::Config("ragged repetition grid".into()))
            }
            Some(n) => n,
            None => current_rep,
        };
        let atoms = n_atoms.unwrap_or(0);
        if atoms == 0 || atoms > u64::from(u32::MAX) {
            return Err(Error::Config("n_atoms out of range".into()));
        }
        Ok(Self {
            durations_s,
            n_atoms: atoms as u32,
            n_reps: reps as u32,
            rows,
        })
    }
}

use crate::csv_float as format_float;

fn parse_float(s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|e| Error::Config(format!("bad float {s:?}: {e}")))?;
    if v.is_nan() {
        return Err(Error::Config("NaN not allowed".into()));
    }
    Ok(v)
}

fn delta_for_run(plan: &ExperimentPlan, duration_index: usize, rep: usize, duration: f64) -> f64 {
    match plan.noise_resampling {
        NoiseResampling::PerRun => {
            let mut rng = rng::stream(plan.seed, DOMAIN_DELTA, duration_index as u64, rep as u64);
            plan.noise.sample_delta(
                plan.delta0_rad_per_s,
                plan.drive_detuning_rad_per_s,
                duration,
                &mut rng,
            )
        }
        NoiseResampling::PerDuration => {
            let mut rng = rng::stream(plan.seed, DOMAIN_DELTA, duration_index as u64, 0);
            plan.noise.sample_delta(
                plan.delta0_rad_per_s,
                plan.drive_detuning_rad_per_s,
                duration,
                &mut rng,
            )
        }
    }
}

/// Run a full campaign with the chosen split model. Runs execute in parallel;
/// the result is identical under any schedule.
pub fn simulate_ensemble_with(plan: &ExperimentPlan, model: SplitModel) -> Result<EnsembleTable> {
    plan.validate()?;
    let durations = plan.durations();
    let n_reps = plan.n_reps as usize;
    let total = durations.len() * n_reps;

    let rows: Vec<RunResult> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let i = flat / n_reps;
            let j = flat % n_reps;
            let duration = durations[i];
            let delta = delta_for_run(plan, i, j, duration);
            let params = plan.sequence_params(duration, delta);
            let mut rng = rng::stream(plan.seed, DOMAIN_RUN, i as u64, j as u64);
            match model {
                SplitModel::Coherent => sample_run(&params, plan.n_atoms, &mut rng),
                SplitModel::Collapsed => incoherent_run(&params, plan.n_atoms, &mut rng),
            }
        })
        .collect();

    Ok(EnsembleTable {
        durations_s: durations,
        n_atoms: plan.n_atoms,
        n_reps: plan.n_reps,
        rows,
    })
}

/// Run a full coherent campaign.
pub fn simulate_ensemble(plan: &ExperimentPlan) -> Result<EnsembleTable> {
    simulate_ensemble_with(plan, SplitModel::Coherent)
}

/// Exact (pre-sampling) upper-port probability of a run, used by tests and by
/// the histogram convolution.
pub fn exact_p1(plan: &ExperimentPlan, duration: f64, delta: f64) -> f64 {
    sequence::p_upper_port(&final_state(&plan.sequence_params(duration, delta)))
}
