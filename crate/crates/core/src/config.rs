//! JSON input schemas for the command-line tool, plus the built-in
//! experiment scenarios.
//!
//! Parsing is strict: unknown keys are rejected so a typo in a physics
//! parameter fails fast instead of silently running the wrong experiment.
//! The `parse_*` functions are the single entry points for untrusted input
//! and are exercised directly by the fuzz targets.

use serde::{Deserialize, Serialize};

use crate::analysis::CoherenceConfig;
use crate::mc::{ExperimentPlan, NoiseModel, NoiseResampling};
use crate::params::{self, AtomSpec, Geometry, TrapSpec};
use crate::sequence::{SequenceParams, SignConvention};
use crate::tdse::{Grid1D, TrapProtocol};
use crate::{Error, Result};

/// Default top-level seed; override with `--seed` or `TCS_SEED`.
pub const DEFAULT_SEED: u64 = 0xC10C_CAFE;

/// Input for the `params` command.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsConfig {
    pub atom: AtomSpec,
    pub trap: TrapSpec,
    pub geometry: Geometry,
}

impl ParamsConfig {
    pub fn validate(&self) -> Result<()> {
        self.atom.validate()?;
        self.trap.validate()?;
        self.geometry.validate()
    }
}

/// Input for the `sequence` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    #[serde(flatten)]
    pub params: SequenceParams,
    #[serde(default)]
    pub sign_convention: SignConvention,
}

impl SequenceConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()
    }
}

/// Input for the `ensemble` and `fringe` commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub plan: ExperimentPlan,
}

impl PlanConfig {
    pub fn validate(&self) -> Result<()> {
        self.plan.validate()
    }
}

/// Input for the `accuracy` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccuracyConfig {
    pub plan: ExperimentPlan,
    pub n_ensembles: u32,
}

impl AccuracyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_ensembles < 2 {
            return Err(Error::Config("n_ensembles must be at least 2".into()));
        }
        self.plan.validate()
    }
}

/// Input for the `histogram` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramConfig {
    pub plan: ExperimentPlan,
    #[serde(default)]
    pub coherence: CoherenceConfig,
}

impl HistogramConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.coherence.ks_alpha > 0.0 && self.coherence.ks_alpha < 1.0) {
            return Err(Error::Config("ks_alpha must lie in (0, 1)".into()));
        }
        if !(self.coherence.chi2_alpha > 0.0 && self.coherence.chi2_alpha < 1.0) {
            return Err(Error::Config("chi2_alpha must lie in (0, 1)".into()));
        }
        if self.coherence.convolution_samples < 1000 {
            return Err(Error::Config(
                "convolution_samples must be at least 1000".into(),
            ));
        }
        self.plan.validate()
    }
}

/// Input for the `tdse` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdseConfig {
    pub protocol: TrapProtocol,
    /// Grid override; defaults to `Grid1D::default_for(protocol)`.
    #[serde(default)]
    pub grid: Option<Grid1D>,
    #[serde(default = "default_snapshots")]
    pub n_snapshots: usize,
    /// Compute the instantaneous-eigenstate overlap alongside populations.
    #[serde(default = "default_true")]
    pub adiabaticity: bool,
}

fn default_snapshots() -> usize {
    crate::tdse::DEFAULT_SNAPSHOTS
}

fn default_true() -> bool {
    true
}

impl TdseConfig {
    pub fn grid(&self) -> Grid1D {
        self.grid.unwrap_or_else(|| Grid1D::default_for(&self.protocol))
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        self.grid().validate_for(&self.protocol)?;
        if self.n_snapshots == 0 {
            return Err(Error::Config("n_snapshots must be at least 1".into()));
        }
        Ok(())
    }
}

fn from_slice<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::Config(format!("malformed config: {e}")))
}

pub fn parse_params_config(bytes: &[u8]) -> Result<ParamsConfig> {
    let cfg: ParamsConfig = from_slice(bytes)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_sequence_config(bytes: &[u8]) -> Result<SequenceConfig> {
    let cfg: SequenceConfig = from_slice(bytes)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_plan_config(bytes: &[u8]) -> Result<PlanConfig> {
    let cfg: PlanConfig = from_slice(bytes)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_accuracy_config(bytes: &[u8]) -> Result<AccuracyConfig> {
    let cfg: AccuracyConfig = from_slice(bytes)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_histogram_config(bytes: &[u8]) -> Result<HistogramConfig> {
    let cfg: HistogramConfig = from_slice(bytes)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_tdse_config(bytes: &[u8]) -> Result<TdseConfig> {
    let cfg: TdseConfig = from_slice(bytes)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Redshift for the default ¹⁷¹Yb spec with a 10 mm arm separation.
pub fn default_redshift() -> f64 {
    let atom = AtomSpec::yb171();
    let omega0 = params::clock_angular_frequency(&atom).expect("valid default atom");
    params::gravitational_redshift(
        omega0,
        params::PhysicalConstants::codata2018().g_earth,
        10e-3,
    )
    .expect("valid default geometry")
}

/// The fringe-scan campaign: Δ = 2π·1000 Hz, 20 atoms per run, 5000
/// repetitions of 8 durations starting at T = 10 s.
pub fn fringe_scan_plan(seed: u64) -> ExperimentPlan {
    ExperimentPlan {
        n_atoms: 20,
        n_durations: 8,
        n_reps: 5000,
        t0_s: 10.0,
        drive_detuning_rad_per_s: std::f64::consts::TAU * 1000.0,
        delta0_rad_per_s: 0.0,
        epsilon_rad_per_s: default_redshift(),
        noise: NoiseModel::uniform_phase(),
        noise_resampling: NoiseResampling::PerRun,
        seed,
        overhead_s: 5.0,
    }
}

/// The exit-port histogram campaign: a single duration T = 10.00025 s with
/// strong intensity noise.
pub fn histogram_plan(n_atoms: u32, seed: u64) -> ExperimentPlan {
    ExperimentPlan {
        n_atoms,
        n_durations: 1,
        n_reps: 5000,
        t0_s: 10.00025,
        drive_detuning_rad_per_s: std::f64::consts::TAU * 1000.0,
        delta0_rad_per_s: 0.0,
        epsilon_rad_per_s: default_redshift(),
        noise: NoiseModel::uniform_phase(),
        noise_resampling: NoiseResampling::PerRun,
        seed,
        overhead_s: 5.0,
    }
}

/// One row of the accuracy-vs-parameters study.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AccuracyScenario {
    pub n_atoms: u32,
    pub n_reps: u32,
    pub t0_s: f64,
    /// Reference total runtime (days).
    pub reference_runtime_days: f64,
    /// Reference relative accuracy in extracting ε.
    pub reference_relative_accuracy: f64,
}

impl AccuracyScenario {
    pub fn plan(&self, seed: u64) -> ExperimentPlan {
        ExperimentPlan {
            n_atoms: self.n_atoms,
            n_durations: 8,
            n_reps: self.n_reps,
            t0_s: self.t0_s,
            drive_detuning_rad_per_s: std::f64::consts::TAU * 1000.0,
            delta0_rad_per_s: 0.0,
            epsilon_rad_per_s: default_redshift(),
            noise: NoiseModel::uniform_phase(),
            noise_resampling: NoiseResampling::PerRun,
            seed,
            overhead_s: 5.0,
        }
    }
}

/// The eleven benchmark parameter choices of the accuracy study.
pub fn accuracy_scenarios() -> Vec<AccuracyScenario> {
    let row = |n_atoms, n_reps, t0_s, days, acc| AccuracyScenario {
        n_atoms,
        n_reps,
        t0_s,
        reference_runtime_days: days,
        reference_relative_accuracy: acc,
    };
    vec![
        row(100, 5_000, 1.0, 2.8, 0.381),
        row(100, 10_000, 1.0, 5.6, 0.284),
        row(20, 5_000, 3.0, 3.7, 0.289),
        row(100, 5_000, 3.0, 3.7, 0.129),
        row(100, 10_000, 3.0, 7.4, 0.098),
        row(10, 1_000, 10.0, 1.4, 0.284),
        row(10, 5_000, 10.0, 7.0, 0.124),
        row(20, 5_000, 10.0, 7.0, 0.088),
        row(100, 1_000, 10.0, 1.4, 0.09),
        row(100, 5_000, 10.0, 7.0, 0.038),
        row(100, 10_000, 10.0, 13.9, 0.027),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_config_parses_and_validates() {
        let cfg = parse_params_config(b"{}").unwrap();
        assert_eq!(cfg.atom.name, "171Yb");
        assert!(parse_params_config(b"{\"nonsense\": 1}").is_err());
        assert!(parse_params_config(b"not json").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected_everywhere() {
        let plan = fringe_scan_plan(1);
        let mut value = serde_json::to_value(PlanConfig { plan }).unwrap();
        value["plan"]["typo_field"] = 1.into();
        let bytes = serde_json::to_vec(&value).unwrap();
        assert!(parse_plan_config(&bytes).is_err());
    }

    #[test]
    fn plan_configs_round_trip() {
        let cfg = PlanConfig {
            plan: fringe_scan_plan(DEFAULT_SEED),
        };
        let bytes = serde_json::to_vec(&cfg).unwrap();
        let parsed = parse_plan_config(&bytes).unwrap();
        assert_eq!(parsed.plan, cfg.plan);
    }

    #[test]
    fn default_redshift_matches_hand_value() {
        // (2πc/578 nm)/c² · 9.80665 · 10 mm = 3.5559e-3 rad/s.
        let eps = default_redshift();
        assert!((eps - 3.5559e-3).abs() < 1e-6, "{eps}");
    }

    #[test]
    fn scenario_budgets_match_reference_runtimes() {
        for s in accuracy_scenarios() {
            let plan = s.plan(1);
            let days = plan.runtime_budget_s() / 86_400.0;
            assert!(
                (days - s.reference_runtime_days).abs() < 0.1,
                "{s:?} gives {days} days"
            );
        }
    }

    #[test]
    fn tdse_config_defaults_are_consistent() {
        let cfg = TdseConfig {
            protocol: TrapProtocol::default_protocol(),
            grid: None,
            n_snapshots: default_snapshots(),
            adiabaticity: true,
        };
        cfg.validate().unwrap();
        let bytes = serde_json::to_vec(&cfg).unwrap();
        parse_tdse_config(&bytes).unwrap();
    }
}
