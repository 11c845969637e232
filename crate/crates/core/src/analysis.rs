//! Estimation layer: fringe fitting, redshift extraction, accuracy ensembles,
//! and the exit-port coherence verification.

use rand::Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::mc::{simulate_ensemble, DurationSummary, EnsembleTable, ExperimentPlan};
use crate::rng::{self, DOMAIN_CONVOLUTION, DOMAIN_ENSEMBLE};
use crate::sequence::SignConvention;
use crate::{invalid_input, Error, Result};

/// Result of fitting P(T) = ½ + a·sin(ΔT) + b·cos(ΔT) to a fringe scan.
///
/// The model frequency is fixed at the drive detuning Δ: over a single fringe
/// period the ε/2 frequency shift is unresolvable, so the amplitude carries
/// all the redshift information.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FringeFit {
    /// Fitted oscillation amplitude, ≥ 0 (sign absorbed into the phase).
    pub amplitude: f64,
    /// Fitted phase (rad): the model is ½ + amplitude·sin(ΔT + phase).
    pub phase: f64,
    /// Fixed model offset.
    pub offset: f64,
    /// Root-mean-square residual of the fit.
    pub rms_residual: f64,
    /// One-sigma uncertainty of the fitted amplitude.
    pub amplitude_stderr: f64,
    /// Redshift extracted from the visibility, ≥ 0 (rad/s). Zero until
    /// [`FringeFit::with_epsilon`] is applied.
    pub epsilon_hat: f64,
    /// Reference duration used for the inversion (s).
    pub t_ref: f64,
    /// True when the visibility estimator exceeded 1 and was clamped.
    pub saturated: bool,
}

impl FringeFit {
    /// Model value at duration `t` for drive detuning Δ.
    pub fn evaluate(&self, drive_detuning: f64, t: f64) -> f64 {
        self.offset + self.amplitude * (drive_detuning * t + self.phase).sin()
    }

    /// Fill `epsilon_hat`, `t_ref`, and the saturation flag by inverting the
    /// visibility at `t_ref`.
    pub fn with_epsilon(mut self, t_ref: f64) -> Result<Self> {
        let (eps, saturated) = extract_epsilon(&self, t_ref)?;
        self.epsilon_hat = eps;
        self.t_ref = t_ref;
        self.saturated = saturated;
        Ok(self)
    }
}

/// Weighted linear least squares of ½ + a·sin(ΔT) + b·cos(ΔT).
///
/// Weights are 1/stderr²; if any provided stderr is non-positive the fit
/// falls back to uniform weights. At least 3 distinct durations are needed.
pub fn fit_fringe(
    durations: &[f64],
    pg_means: &[f64],
    pg_stderrs: &[f64],
    drive_detuning: f64,
) -> Result<FringeFit> {
    let n = durations.len();
    if n < 3 {
        return Err(Error::Fit(format!("need at least 3 durations, got {n}")));
    }
    if pg_means.len() != n || pg_stderrs.len() != n {
        return Err(Error::Fit("mismatched input lengths".into()));
    }
    if !(drive_detuning > 0.0) || !drive_detuning.is_finite() {
        return Err(Error::Fit("drive detuning must be positive".into()));
    }

    let weighted = pg_stderrs.iter().all(|&s| s > 0.0 && s.is_finite());
    let weights: Vec<f64> = if weighted {
        pg_stderrs.iter().map(|&s| 1.0 / (s * s)).collect()
    } else {
        vec![1.0; n]
    };

    let mut s_ss = 0.0;
    let mut s_cc = 0.0;
    let mut s_sc = 0.0;
    let mut r_s = 0.0;
    let mut r_c = 0.0;
    for i in 0..n {
        let theta = drive_detuning * durations[i];
        let (sin, cos) = theta.sin_cos();
        let w = weights[i];
        let y = pg_means[i] - 0.5;
        s_ss += w * sin * sin;
        s_cc += w * cos * cos;
        s_sc += w * sin * cos;
        r_s += w * y * sin;
        r_c += w * y * cos;
    }
    let det = s_ss * s_cc - s_sc * s_sc;
    let scale = (s_ss * s_cc).abs().max(s_sc * s_sc);
    if !(det.abs() > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::Fit(
            "singular design matrix (durations do not resolve the fringe)".into(),
        ));
    }
    let a = (r_s * s_cc - r_c * s_sc) / det;
    let b = (r_c * s_ss - r_s * s_sc) / det;

    let amplitude = a.hypot(b);
    let phase = b.atan2(a);

    let mut ss_res = 0.0;
    for i in 0..n {
        let theta = drive_detuning * durations[i];
        let fitted = 0.5 + a * theta.sin() + b * theta.cos();
        ss_res += (pg_means[i] - fitted).powi(2);
    }
    let rms_residual = (ss_res / n as f64).sqrt();

    // Parameter covariance (XᵀWX)⁻¹; for uniform weights, scale by the
    // residual variance estimate.
    let mut cov_aa = s_cc / det;
    let mut cov_bb = s_ss / det;
    let mut cov_ab = -s_sc / det;
    if !weighted && n > 2 {
        let sigma2 = ss_res / (n - 2) as f64;
        cov_aa *= sigma2;
        cov_bb *= sigma2;
        cov_ab *= sigma2;
    }
    let amplitude_stderr = if amplitude > 0.0 {
        ((a * a * cov_aa + b * b * cov_bb + 2.0 * a * b * cov_ab) / (amplitude * amplitude))
            .max(0.0)
            .sqrt()
    } else {
        cov_aa.max(cov_bb).max(0.0).sqrt()
    };

    Ok(FringeFit {
        amplitude,
        phase,
        offset: 0.5,
        rms_residual,
        amplitude_stderr,
        epsilon_hat: 0.0,
        t_ref: 0.0,
        saturated: false,
    })
}

/// Invert the visibility at a reference duration: V̂ = 2·amplitude,
/// ε̂ = (2/t_ref)·arcsin(V̂).
///
/// Returns (ε̂, saturated); sampling noise can push V̂ above 1, in which case
/// it is clamped and flagged.
pub fn extract_epsilon(fit: &FringeFit, t_ref: f64) -> Result<(f64, bool)> {
    if !(t_ref > 0.0) || !t_ref.is_finite() {
        return Err(invalid_input("t_ref must be positive"));
    }
    let v_hat = 2.0 * fit.amplitude;
    let (v_hat, saturated) = if v_hat > 1.0 { (1.0, true) } else { (v_hat, false) };
    Ok((2.0 / t_ref * v_hat.asin(), saturated))
}

/// Fit the P_g fringe of a campaign summary and extract the redshift using
/// the window midpoint as the reference duration.
pub fn analyze_fringe(
    per_duration: &[DurationSummary],
    drive_detuning: f64,
    t_ref: f64,
) -> Result<FringeFit> {
    let durations: Vec<f64> = per_duration.iter().map(|d| d.duration_s).collect();
    let means: Vec<f64> = per_duration.iter().map(|d| d.pg_mean).collect();
    let stderrs: Vec<f64> = per_duration.iter().map(|d| d.pg_stderr).collect();
    fit_fringe(&durations, &means, &stderrs, drive_detuning)?.with_epsilon(t_ref)
}

/// Spread of extracted redshifts over independently seeded campaigns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub epsilon_true: f64,
    pub mean_epsilon_hat: f64,
    /// One standard deviation of ε̂ normalized by the true ε.
    pub relative_accuracy: f64,
    pub n_ensembles: u32,
    /// Campaigns whose visibility estimator saturated at 1.
    pub n_saturated: u32,
}

/// Run `n_ensembles` independently seeded campaigns of `plan`, fit each
/// fringe, and report std(ε̂)/ε.
pub fn relative_accuracy(plan: &ExperimentPlan, n_ensembles: u32) -> Result<AccuracyReport> {
    if n_ensembles < 2 {
        return Err(invalid_input("need at least 2 ensembles"));
    }
    plan.validate()?;
    if !(plan.epsilon_rad_per_s > 0.0) {
        return Err(invalid_input("relative accuracy needs a positive true ε"));
    }
    let t_ref = plan.t_ref();
    let results: Vec<Result<(f64, bool)>> = (0..n_ensembles)
        .into_par_iter()
        .map(|e| {
            let mut sub_plan = plan.clone();
            sub_plan.seed = rng::derive_key(plan.seed, DOMAIN_ENSEMBLE, u64::from(e), 0);
            let table = simulate_ensemble(&sub_plan)?;
            let summary = table.summary();
            let fit = analyze_fringe(&summary.per_duration, plan.drive_detuning_rad_per_s, t_ref)?;
            Ok((fit.epsilon_hat, fit.saturated))
        })
        .collect();

    let mut epsilons = Vec::with_capacity(n_ensembles as usize);
    let mut n_saturated = 0u32;
    for r in results {
        let (eps, saturated) = r?;
        epsilons.push(eps);
        n_saturated += u32::from(saturated);
    }
    let n = epsilons.len() as f64;
    let mean = epsilons.iter().sum::<f64>() / n;
    let var = epsilons.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(AccuracyReport {
        epsilon_true: plan.epsilon_rad_per_s,
        mean_epsilon_hat: mean,
        relative_accuracy: var.sqrt() / plan.epsilon_rad_per_s,
        n_ensembles,
        n_saturated,
    })
}

/// Arcsine density of x = ½ − A·sin(φ) for uniform φ:
/// P(x) = 1/(π·sqrt(A² − (½ − x)²)) on (½−A, ½+A), zero outside.
pub fn arcsine_pdf(x: f64, a: f64) -> Result<f64> {
    if !(a > 0.0 && a <= 0.5) {
        return Err(invalid_input("arcsine amplitude must lie in (0, 0.5]"));
    }
    let u = x - 0.5;
    if u.abs() >= a {
        return Ok(0.0);
    }
    Ok(1.0 / (std::f64::consts::PI * (a * a - u * u).sqrt()))
}

/// Amplitude of the per-run exact P₁ dispersion under full phase noise:
/// A = ½|sin(T(Δ − ε'/2))| with ε' fixed by the sign convention.
pub fn p1_dispersion_amplitude(
    duration: f64,
    drive_detuning: f64,
    epsilon: f64,
    convention: SignConvention,
) -> f64 {
    let eps = match convention {
        SignConvention::Published => epsilon,
        SignConvention::MatrixProduct => -epsilon,
    };
    0.5 * (duration * (drive_detuning - eps / 2.0)).sin().abs()
}

/// Binned counts over shared edges.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Bins centered on the n_atoms+1 possible estimator values k/n.
    fn lattice(n_atoms: u32) -> Self {
        let n = n_atoms as usize;
        let edges = (0..=n + 1)
            .map(|k| (k as f64 - 0.5) / n as f64)
            .collect();
        Self {
            edges,
            counts: vec![0; n + 1],
        }
    }

    /// `n_bins` uniform bins over [0, 1].
    fn uniform(n_bins: usize) -> Self {
        let edges = (0..=n_bins).map(|k| k as f64 / n_bins as f64).collect();
        Self {
            edges,
            counts: vec![0; n_bins],
        }
    }

    fn bin_of(&self, x: f64) -> usize {
        // Edges are sorted; clamp into range so boundary samples always land.
        match self.edges.binary_search_by(|e| e.total_cmp(&x)) {
            Ok(k) => k.min(self.counts.len() - 1),
            Err(0) => 0,
            Err(k) => (k - 1).min(self.counts.len() - 1),
        }
    }

    fn fill(&mut self, samples: &[f64]) {
        for &x in samples {
            let b = self.bin_of(x);
            self.counts[b] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Normalized bin probabilities.
    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }
}

/// Estimator-histogram binning matching the run size: lattice bins up to 100
/// atoms, 50 uniform bins beyond.
pub fn histogram_for(n_atoms: u32, samples: &[f64]) -> Histogram {
    let mut h = if n_atoms <= 100 {
        Histogram::lattice(n_atoms)
    } else {
        Histogram::uniform(50)
    };
    h.fill(samples);
    h
}

/// Survival function of the Kolmogorov distribution,
/// Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64 * lambda).powi(2)).exp();
        sum += sign * term;
        if term < 1e-12 * sum.abs().max(1e-300) {
            return (2.0 * sum).clamp(0.0, 1.0);
        }
        sign = -sign;
    }
    // The series converges slowly only for λ → 0, where Q → 1.
    1.0
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(sample_a: &[f64], sample_b: &[f64]) -> (f64, f64) {
    let mut a: Vec<f64> = sample_a.to_vec();
    let mut b: Vec<f64> = sample_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n as f64 * m as f64) / (n as f64 + m as f64);
    (d, kolmogorov_sf(ne.sqrt() * d))
}

/// Pearson χ² of observed counts against expected probabilities, pooling
/// bins until each group's expected count is at least `min_expected`.
/// Returns (statistic, degrees of freedom, p-value).
pub fn chi_squared_gof(
    observed: &[u64],
    expected_probs: &[f64],
    min_expected: f64,
) -> Result<(f64, usize, f64)> {
    if observed.len() != expected_probs.len() {
        return Err(invalid_input("observed/expected length mismatch"));
    }
    let total: f64 = observed.iter().sum::<u64>() as f64;
    if total == 0.0 {
        return Err(invalid_input("empty observation set"));
    }
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        acc_o += o as f64;
        acc_e += p * total;
        if acc_e >= min_expected {
            groups.push((acc_o, acc_e));
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if acc_e > 0.0 || acc_o > 0.0 {
        if let Some(last) = groups.last_mut() {
            last.0 += acc_o;
            last.1 += acc_e;
        } else {
            groups.push((acc_o, acc_e));
        }
    }
    if groups.len() < 2 {
        return Err(invalid_input("too few populated bins for a χ² test"));
    }
    let stat: f64 = groups
        .iter()
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = groups.len() - 1;
    let chi2 = ChiSquared::new(dof as f64)
        .map_err(|e| Error::InvalidInput(format!("χ² dof: {e}")))?;
    let p = 1.0 - chi2.cdf(stat);
    Ok((stat, dof, p))
}

/// Monte Carlo convolution of the arcsine P₁ law with binomial sampling
/// noise: distribution of k/n for k ~ Binomial(n, ½ − A·sinφ), φ uniform.
pub fn convolved_reference_probs(
    a: f64,
    n_atoms: u32,
    histogram: &Histogram,
    n_samples: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(a > 0.0 && a <= 0.5) {
        return Err(invalid_input("arcsine amplitude must lie in (0, 0.5]"));
    }
    let mut reference = Histogram {
        edges: histogram.edges.clone(),
        counts: vec![0; histogram.counts.len()],
    };
    let chunk = 65_536u64;
    let n_chunks = n_samples.div_ceil(chunk);
    let partials: Vec<Vec<u64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, DOMAIN_CONVOLUTION, c, 0);
            let mut counts = vec![0u64; reference.counts.len()];
            let todo = chunk.min(n_samples - c * chunk);
            for _ in 0..todo {
                let phi: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
                let p = (0.5 - a * phi.sin()).clamp(0.0, 1.0);
                let k = rand_distr::Binomial::new(u64::from(n_atoms), p)
                    .expect("p in range")
                    .sample(&mut rng);
                let x = k as f64 / f64::from(n_atoms);
                counts[reference.bin_of(x)] += 1;
            }
            counts
        })
        .collect();
    for partial in partials {
        for (slot, c) in reference.counts.iter_mut().zip(partial) {
            *slot += c;
        }
    }
    Ok(reference.probabilities())
}

/// Verdict of the coherent/incoherent comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoherenceVerdict {
    Distinguishable,
    NotDistinguishable,
}

/// Thresholds and reference-sample size for [`coherence_test_with`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoherenceConfig {
    /// KS p-value below which the histograms count as distinguishable.
    pub ks_alpha: f64,
    /// Significance level of the arcsine χ² check.
    pub chi2_alpha: f64,
    /// Synthetic runs used for the arcsine × binomial convolution.
    pub convolution_samples: u64,
    pub convolution_seed: u64,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        Self {
            ks_alpha: 1e-3,
            chi2_alpha: 0.01,
            convolution_samples: 1_000_000,
            convolution_seed: 0x0a5c,
        }
    }
}

/// Comparison of exit-port estimator histograms for coherent vs collapsed
/// splitting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub histogram_coherent: Histogram,
    pub histogram_incoherent: Histogram,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    /// χ² of the coherent histogram against the arcsine density convolved
    /// with binomial noise.
    pub chi2_arcsine: f64,
    pub chi2_dof: usize,
    pub chi2_p_value: f64,
    /// True when the coherent histogram is consistent with the arcsine law at
    /// the configured level.
    pub chi2_consistent: bool,
    pub coherent_std: f64,
    pub incoherent_std: f64,
    pub verdict: CoherenceVerdict,
}

fn sample_std(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Compare coherent and incoherent P̂₁ histograms and check the coherent one
/// against the analytic arcsine law with amplitude `a`.
pub fn coherence_test_with(
    coherent: &EnsembleTable,
    incoherent: &EnsembleTable,
    a: f64,
    config: &CoherenceConfig,
) -> Result<CoherenceReport> {
    if coherent.rows.is_empty() || incoherent.rows.is_empty() {
        return Err(invalid_input("both tables must be nonempty"));
    }
    if coherent.n_atoms != incoherent.n_atoms {
        return Err(invalid_input(
            "tables have different n_atoms; the estimator supports differ",
        ));
    }
    let coh = coherent.p1_hats();
    let inc = incoherent.p1_hats();

    let histogram_coherent = histogram_for(coherent.n_atoms, &coh);
    let histogram_incoherent = histogram_for(incoherent.n_atoms, &inc);

    let (ks_statistic, ks_p_value) = ks_two_sample(&coh, &inc);

    let reference = convolved_reference_probs(
        a,
        coherent.n_atoms,
        &histogram_coherent,
        config.convolution_samples,
        config.convolution_seed,
    )?;
    let (chi2_arcsine, chi2_dof, chi2_p_value) =
        chi_squared_gof(&histogram_coherent.counts, &reference, 5.0)?;

    Ok(CoherenceReport {
        ks_statistic,
        ks_p_value,
        chi2_arcsine,
        chi2_dof,
        chi2_p_value,
        chi2_consistent: chi2_p_value > config.chi2_alpha,
        coherent_std: sample_std(&coh),
        incoherent_std: sample_std(&inc),
        verdict: if ks_p_value < config.ks_alpha {
            CoherenceVerdict::Distinguishable
        } else {
            CoherenceVerdict::NotDistinguishable
        },
        histogram_coherent,
        histogram_incoherent,
    })
}

/// [`coherence_test_with`] at the default thresholds (KS p < 10⁻³, χ² at 1%).
pub fn coherence_test(
    coherent: &EnsembleTable,
    incoherent: &EnsembleTable,
    a: f64,
) -> Result<CoherenceReport> {
    coherence_test_with(coherent, incoherent, a, &CoherenceConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::{NoiseModel, NoiseResampling, SplitModel};
    use crate::sequence;

    const TAU: f64 = std::f64::consts::TAU;

    #[test]
    fn exact_sinusoid_round_trip() {
        let drive = TAU * 1000.0;
        let (a0, b0) = (3.1e-3, -7.7e-3);
        let durations: Vec<f64> = (0..8).map(|k| 10.0 + 1e-3 * k as f64 / 7.0).collect();
        let means: Vec<f64> = durations
            .iter()
            .map(|&t| 0.5 + a0 * (drive * t).sin() + b0 * (drive * t).cos())
            .collect();
        let stderrs = vec![0.0; 8];
        let fit = fit_fringe(&durations, &means, &stderrs, drive).unwrap();
        let amplitude = (a0 * a0 + b0 * b0).sqrt();
        let phase = b0.atan2(a0);
        assert!((fit.amplitude - amplitude).abs() < 1e-9, "{}", fit.amplitude);
        assert!((fit.phase - phase).abs() < 1e-9);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn closed_form_fringe_recovers_visibility() {
        // Noiseless means generated from the closed-form P_g; the fitted
        // amplitude reproduces ½·sin(T·ε/2) at the window midpoint.
        let drive = TAU * 1000.0;
        let eps = 3.5559e-3;
        let t0 = 10.0;
        let durations: Vec<f64> = (0..8).map(|k| t0 + (TAU / drive) * k as f64 / 7.0).collect();
        let means: Vec<f64> = durations
            .iter()
            .map(|&t| {
                let p = sequence::SequenceParams {
                    duration_s: t,
                    drive_detuning_rad_per_s: drive,
                    lower_detuning_rad_per_s: 0.0,
                    redshift_rad_per_s: eps,
                    drive_frequency_rad_per_s: 0.0,
                };
                sequence::closed_form_pg(&p, SignConvention::MatrixProduct)
            })
            .collect();
        let fit = fit_fringe(&durations, &means, &vec![0.0; 8], drive).unwrap();
        let t_ref = t0 + std::f64::consts::PI / drive;
        let expect = 0.5 * (t_ref * eps / 2.0).sin();
        assert!((fit.amplitude - expect).abs() < 1e-6, "{}", fit.amplitude);
        let fit = fit.with_epsilon(t_ref).unwrap();
        assert!((fit.epsilon_hat - eps).abs() / eps < 1e-4);
    }

    #[test]
    fn constant_input_fits_zero_amplitude() {
        let durations: Vec<f64> = (0..8).map(|k| 10.0 + 1e-3 * k as f64 / 7.0).collect();
        let fit = fit_fringe(&durations, &[0.5; 8], &[0.0; 8], TAU * 1000.0).unwrap();
        assert!(fit.amplitude < 1e-15);
        let (eps, saturated) = extract_epsilon(&fit, 10.0).unwrap();
        assert_eq!(eps, 0.0);
        assert!(!saturated);
    }

    #[test]
    fn degenerate_design_is_rejected() {
        let durations = [10.0; 8];
        let err = fit_fringe(&durations, &[0.5; 8], &[0.0; 8], TAU * 1000.0);
        assert!(matches!(err, Err(Error::Fit(_))));
        assert!(fit_fringe(&[10.0, 10.1], &[0.5, 0.5], &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn epsilon_inversion_values() {
        let mut fit = fit_fringe(
            &[10.0, 10.0003, 10.0007],
            &[0.5, 0.51, 0.49],
            &[0.0; 3],
            TAU * 1000.0,
        )
        .unwrap();
        fit.amplitude = 0.0089;
        let (eps, saturated) = extract_epsilon(&fit, 10.0).unwrap();
        assert!(!saturated);
        assert!((eps - 3.56e-3).abs() < 1e-5, "{eps}");
        // Saturation clamps at arcsin(1).
        fit.amplitude = 0.7;
        let (eps, saturated) = extract_epsilon(&fit, 10.0).unwrap();
        assert!(saturated);
        assert!((eps - std::f64::consts::PI / 10.0).abs() < 1e-12);
        // Small-V linear regime within 1% up to V̂ = 0.17.
        fit.amplitude = 0.085;
        let (eps, _) = extract_epsilon(&fit, 10.0).unwrap();
        let linear = 4.0 * fit.amplitude / 10.0;
        assert!((eps - linear).abs() / linear < 0.01);
        assert!(extract_epsilon(&fit, 0.0).is_err());
    }

    #[test]
    fn arcsine_pdf_properties() {
        let a = 0.43;
        // Graded quadrature over the open support handles the edge
        // singularities: x = ½ + a·sinθ.
        let n = 100_000;
        let mut integral = 0.0;
        for k in 0..n {
            let theta = -std::f64::consts::FRAC_PI_2
                + std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
            let x = 0.5 + a * theta.sin();
            integral += arcsine_pdf(x, a).unwrap()
                * a
                * theta.cos()
                * std::f64::consts::PI
                / n as f64;
        }
        assert!((integral - 1.0).abs() < 1e-6, "integral {integral}");
        for u in [0.01, 0.1, 0.33, 0.42] {
            assert_eq!(
                arcsine_pdf(0.5 + u, a).unwrap(),
                arcsine_pdf(0.5 - u, a).unwrap()
            );
        }
        assert_eq!(arcsine_pdf(0.5 + a, a).unwrap(), 0.0);
        assert_eq!(arcsine_pdf(-1.0, a).unwrap(), 0.0);
        for bad in [0.0, -0.2, 0.6] {
            assert!(arcsine_pdf(0.5, bad).is_err());
        }
        assert!(arcsine_pdf(0.5, 0.5).is_ok());
    }

    #[test]
    fn arcsine_sampling_matches_density() {
        // Empirical histogram of ½ − A·sin(φ) against binned pdf mass, χ² at
        // the 1% level.
        let a = 0.4;
        let n_samples = 100_000usize;
        let mut rng = rng::stream(21, DOMAIN_CONVOLUTION, 0, 0);
        let samples: Vec<f64> = (0..n_samples)
            .map(|_| 0.5 - a * (rng.gen::<f64>() * TAU).sin())
            .collect();
        let n_bins = 40;
        let mut hist = Histogram::uniform(n_bins);
        hist.fill(&samples);
        // Expected mass per bin from the analytic CDF (asin form).
        let cdf = |x: f64| {
            let u = ((x - 0.5) / a).clamp(-1.0, 1.0);
            0.5 + u.asin() / std::f64::consts::PI
        };
        let probs: Vec<f64> = (0..n_bins)
            .map(|k| cdf(hist.edges[k + 1]) - cdf(hist.edges[k]))
            .collect();
        let (stat, dof, p) = chi_squared_gof(&hist.counts, &probs, 5.0).unwrap();
        assert!(p > 0.01, "χ² = {stat} at {dof} dof, p = {p}");
    }

    #[test]
    fn heavy_edges_of_the_arcsine_law() {
        // Mass in the two outer deciles of the support exceeds the central
        // decile.
        let a = 0.5;
        let decile = 2.0 * a / 10.0;
        let mass = |lo: f64, hi: f64| {
            let n = 20_000;
            (0..n)
                .map(|k| {
                    let x = lo + (hi - lo) * (k as f64 + 0.5) / n as f64;
                    arcsine_pdf(x, a).unwrap() * (hi - lo) / n as f64
                })
                .sum::<f64>()
        };
        let left = mass(0.5 - a, 0.5 - a + decile);
        let right = mass(0.5 + a - decile, 0.5 + a);
        let center = mass(0.5 - decile / 2.0, 0.5 + decile / 2.0);
        assert!(left > center && right > center);
    }

    #[test]
    fn kolmogorov_sf_reference_points() {
        // Known quantiles of the Kolmogorov distribution.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-3);
        assert!(kolmogorov_sf(0.0) == 1.0);
        assert!(kolmogorov_sf(6.0) < 1e-12);
    }

    #[test]
    fn ks_two_sample_separates_shifted_samples() {
        let a: Vec<f64> = (0..2000).map(|k| k as f64 / 2000.0).collect();
        let b: Vec<f64> = (0..2000).map(|k| 0.3 + k as f64 / 2000.0).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert!(d > 0.25);
        assert!(p < 1e-6);
        let (d_same, p_same) = ks_two_sample(&a, &a);
        assert!(d_same < 1e-12);
        assert!(p_same > 0.99);
    }

    fn fig3_plan(n_atoms: u32, n_reps: u32, seed: u64) -> ExperimentPlan {
        ExperimentPlan {
            n_atoms,
            n_durations: 1,
            n_reps,
            t0_s: 10.00025,
            drive_detuning_rad_per_s: TAU * 1000.0,
            delta0_rad_per_s: 0.0,
            epsilon_rad_per_s: 3.5559e-3,
            noise: NoiseModel::uniform_phase(),
            noise_resampling: NoiseResampling::PerRun,
            seed,
            overhead_s: 5.0,
        }
    }

    #[test]
    fn coherent_and_incoherent_histograms_are_distinguishable() {
        let plan = fig3_plan(10, 800, 31);
        let coherent = crate::mc::simulate_ensemble(&plan).unwrap();
        let incoherent =
            crate::mc::simulate_ensemble_with(&plan, SplitModel::Collapsed).unwrap();
        let a = p1_dispersion_amplitude(
            plan.t0_s,
            plan.drive_detuning_rad_per_s,
            plan.epsilon_rad_per_s,
            SignConvention::MatrixProduct,
        );
        let config = CoherenceConfig {
            convolution_samples: 200_000,
            ..CoherenceConfig::default()
        };
        let report = coherence_test_with(&coherent, &incoherent, a, &config).unwrap();
        assert_eq!(report.verdict, CoherenceVerdict::Distinguishable);
        assert!(report.chi2_consistent, "χ² p = {}", report.chi2_p_value);
        // Incoherent spread is binomial.
        assert!((report.incoherent_std / (0.25f64 / 10.0).sqrt() - 1.0).abs() < 0.1);
    }

    #[test]
    fn coherent_ensembles_from_two_seeds_are_not_distinguishable() {
        let base = fig3_plan(10, 800, 77);
        let mut other = base.clone();
        other.seed = 78;
        let a_table = crate::mc::simulate_ensemble(&base).unwrap();
        let b_table = crate::mc::simulate_ensemble(&other).unwrap();
        let a = p1_dispersion_amplitude(
            base.t0_s,
            base.drive_detuning_rad_per_s,
            base.epsilon_rad_per_s,
            SignConvention::MatrixProduct,
        );
        let config = CoherenceConfig {
            convolution_samples: 200_000,
            ..CoherenceConfig::default()
        };
        let report = coherence_test_with(&a_table, &b_table, a, &config).unwrap();
        assert_eq!(report.verdict, CoherenceVerdict::NotDistinguishable);
    }

    #[test]
    fn mismatched_atom_counts_are_rejected() {
        let a_table = crate::mc::simulate_ensemble(&fig3_plan(10, 50, 1)).unwrap();
        let b_table = crate::mc::simulate_ensemble(&fig3_plan(20, 50, 1)).unwrap();
        assert!(coherence_test(&a_table, &b_table, 0.49).is_err());
    }

    #[test]
    fn relative_accuracy_tracks_binomial_scaling() {
        // Reduced-size campaign: N_a = 20, N₂ = 500 at T = 10 s predicts
        // std(ε̂)/ε ≈ σ_mean/(2·A)/ε·... ≈ 0.28; allow a generous band.
        let plan = ExperimentPlan {
            n_atoms: 20,
            n_durations: 8,
            n_reps: 500,
            t0_s: 10.0,
            drive_detuning_rad_per_s: TAU * 1000.0,
            delta0_rad_per_s: 0.0,
            epsilon_rad_per_s: 3.5559e-3,
            noise: NoiseModel::uniform_phase(),
            noise_resampling: NoiseResampling::PerRun,
            seed: 0x7ab,
            overhead_s: 5.0,
        };
        let report = relative_accuracy(&plan, 40).unwrap();
        assert!(
            report.relative_accuracy > 0.14 && report.relative_accuracy < 0.45,
            "relative accuracy {}",
            report.relative_accuracy
        );
        assert_eq!(report.n_saturated, 0);
        assert!(report.mean_epsilon_hat > 0.0);
    }

    #[test]
    fn accuracy_improves_with_more_data() {
        let mut small = fig3_plan(10, 300, 5);
        small.n_durations = 8;
        small.t0_s = 10.0;
        let mut large = small.clone();
        large.n_atoms = 40;
        large.n_reps = 1200;
        let r_small = relative_accuracy(&small, 24).unwrap();
        let r_large = relative_accuracy(&large, 24).unwrap();
        assert!(
            r_large.relative_accuracy < r_small.relative_accuracy,
            "{} !< {}",
            r_large.relative_accuracy,
            r_small.relative_accuracy
        );
    }

    #[test]
    fn extraction_is_convention_independent() {
        // The fitted amplitude, and hence ε̂, does not depend on the fringe
        // phase sign convention: negate ε in the generator and compare.
        let drive = TAU * 1000.0;
        let t0 = 10.0;
        let durations: Vec<f64> = (0..8).map(|k| t0 + (TAU / drive) * k as f64 / 7.0).collect();
        let gen = |sign: f64| -> FringeFit {
            let means: Vec<f64> = durations
                .iter()
                .map(|&t| {
                    let p = sequence::SequenceParams {
                        duration_s: t,
                        drive_detuning_rad_per_s: drive,
                        lower_detuning_rad_per_s: 0.0,
                        redshift_rad_per_s: sign * 3.5559e-3,
                        drive_frequency_rad_per_s: 0.0,
                    };
                    sequence::closed_form_pg(&p, SignConvention::Published)
                })
                .collect();
            fit_fringe(&durations, &means, &vec![0.0; 8], drive).unwrap()
        };
        let plus = gen(1.0);
        let minus = gen(-1.0);
        assert!((plus.amplitude - minus.amplitude).abs() < 1e-12);
    }
}
