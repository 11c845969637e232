//! Exact engine for the 4-dimensional Hilbert space of the interferometer.
//!
//! The basis is ordered (g;1, g;2, e;1, e;2): clock state g/e, spatial arm
//! 1/2, with arm 1 the upper arm. The full sequence is
//!
//! ```text
//! |ψ_f⟩ = U_rot†(T) · U_π/2† · U_BS† · U_π,l · U_phase(T) · U_BS · U_π/2 |g;1⟩
//! ```
//!
//! built from instantaneous ideal pulses. Motional degrees of freedom are
//! abstracted away at this level; the splitting dynamics live in [`crate::tdse`].

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::{invalid_input, Result};

/// Basis index of |g;1⟩ (ground clock state, upper arm).
pub const G1: usize = 0;
/// Basis index of |g;2⟩ (ground clock state, lower arm).
pub const G2: usize = 1;
/// Basis index of |e;1⟩ (excited clock state, upper arm).
pub const E1: usize = 2;
/// Basis index of |e;2⟩ (excited clock state, lower arm).
pub const E2: usize = 3;

/// Maximum-entry tolerance on ‖U†U − I‖ accepted at `Unitary4` construction.
pub const UNITARITY_TOL: f64 = 1e-12;
/// Tolerance on |‖ψ‖² − 1| accepted at `StateVector4` construction.
pub const NORM_TOL: f64 = 1e-12;

pub(crate) type Mat4 = [[C64; 4]; 4];

fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[C64::new(0.0, 0.0); 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn mat_dagger(a: &Mat4) -> Mat4 {
    let mut out = [[C64::new(0.0, 0.0); 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry = a[j][i].conj();
        }
    }
    out
}

fn mat_vec(a: &Mat4, v: &[C64; 4]) -> [C64; 4] {
    let mut out = [C64::new(0.0, 0.0); 4];
    for (i, entry) in out.iter_mut().enumerate() {
        *entry = (0..4).map(|k| a[i][k] * v[k]).sum();
    }
    out
}

/// Normalized state over the (g;1, g;2, e;1, e;2) basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateVector4 {
    amplitudes: [C64; 4],
}

impl StateVector4 {
    /// Wrap amplitudes, rejecting vectors whose norm deviates from 1 by more
    /// than [`NORM_TOL`].
    pub fn new(amplitudes: [C64; 4]) -> Result<Self> {
        let norm_sq: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > NORM_TOL {
            return Err(invalid_input(format!(
                "state norm² = {norm_sq} deviates from 1 beyond tolerance"
            )));
        }
        Ok(Self { amplitudes })
    }

    /// Basis state |index⟩.
    pub fn basis(index: usize) -> Self {
        let mut amplitudes = [C64::new(0.0, 0.0); 4];
        amplitudes[index] = C64::new(1.0, 0.0);
        Self { amplitudes }
    }

    pub fn amplitudes(&self) -> &[C64; 4] {
        &self.amplitudes
    }

    /// Occupation probabilities in basis order.
    pub fn joint_probabilities(&self) -> [f64; 4] {
        [
            self.amplitudes[G1].norm_sqr(),
            self.amplitudes[G2].norm_sqr(),
            self.amplitudes[E1].norm_sqr(),
            self.amplitudes[E2].norm_sqr(),
        ]
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Probability of exiting from the upper port (arm 1), Σ_k |⟨k;1|ψ⟩|².
pub fn p_upper_port(s: &StateVector4) -> f64 {
    let a = s.amplitudes();
    a[G1].norm_sqr() + a[E1].norm_sqr()
}

/// Probability of exiting from the lower port (arm 2).
pub fn p_lower_port(s: &StateVector4) -> f64 {
    let a = s.amplitudes();
    a[G2].norm_sqr() + a[E2].norm_sqr()
}

/// Probability of ending in the clock ground state, Σ_l |⟨g;l|ψ⟩|².
pub fn p_ground(s: &StateVector4) -> f64 {
    let a = s.amplitudes();
    a[G1].norm_sqr() + a[G2].norm_sqr()
}

/// Probability of ending in the clock excited state.
pub fn p_excited(s: &StateVector4) -> f64 {
    let a = s.amplitudes();
    a[E1].norm_sqr() + a[E2].norm_sqr()
}

/// A 4×4 unitary; unitarity is checked at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unitary4 {
    entries: Mat4,
}

impl Unitary4 {
    pub fn new(entries: Mat4) -> Result<Self> {
        let u = Self { entries };
        let residual = u.unitarity_residual();
        if residual > UNITARITY_TOL {
            return Err(invalid_input(format!(
                "matrix is not unitary: max |U†U - I| = {residual:e}"
            )));
        }
        Ok(u)
    }

    pub fn entries(&self) -> &Mat4 {
        &self.entries
    }

    /// Max-entry norm of U†U − I.
    pub fn unitarity_residual(&self) -> f64 {
        let product = mat_mul(&mat_dagger(&self.entries), &self.entries);
        let mut worst = 0.0f64;
        for (i, row) in product.iter().enumerate() {
            for (j, entry) in row.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((entry - expected).norm());
            }
        }
        worst
    }

    pub fn dagger(&self) -> Unitary4 {
        Unitary4 {
            entries: mat_dagger(&self.entries),
        }
    }

    pub fn compose(&self, rhs: &Unitary4) -> Unitary4 {
        Unitary4 {
            entries: mat_mul(&self.entries, &rhs.entries),
        }
    }

    pub fn apply(&self, s: &StateVector4) -> StateVector4 {
        StateVector4 {
            amplitudes: mat_vec(&self.entries, s.amplitudes()),
        }
    }
}

/// Parameters of one interferometer realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceParams {
    /// Phase-accumulation duration T (s).
    pub duration_s: f64,
    /// Drive detuning Δ = ω − ω₀ (rad/s).
    pub drive_detuning_rad_per_s: f64,
    /// Lower-state detuning δ = (E_g;2 − E_g;1)/ħ (rad/s); the channel
    /// through which tweezer-intensity imbalance enters.
    pub lower_detuning_rad_per_s: f64,
    /// Gravitational redshift ε (rad/s).
    pub redshift_rad_per_s: f64,
    /// Drive frequency ω (rad/s); enters only the rotating-frame unitary and
    /// therefore never affects probabilities.
    #[serde(default)]
    pub drive_frequency_rad_per_s: f64,
}

impl SequenceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return Err(invalid_input("duration must be positive"));
        }
        for v in [
            self.drive_detuning_rad_per_s,
            self.lower_detuning_rad_per_s,
            self.redshift_rad_per_s,
            self.drive_frequency_rad_per_s,
        ] {
            if !v.is_finite() {
                return Err(invalid_input("sequence parameters must be finite"));
            }
        }
        Ok(())
    }
}

/// Which sign of the ε/2 shift the closed-form observables use.
///
/// The direct operator product of the sequence yields sine arguments
/// T(Δ + ε/2) and T(δ + ε/2); the published closed forms carry T(Δ − ε/2)
/// and T(δ − ε/2). The two differ only by the sign attached to ε — a
/// rotating-frame phase convention with identical fringe amplitude and
/// |frequency| to O(ε). Both are supported; `MatrixProduct` is the default
/// because it reproduces [`final_state`] exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignConvention {
    /// Evaluate the closed forms with ε as printed.
    Published,
    /// Evaluate the closed forms with ε negated; agrees with the operator
    /// product to machine precision.
    #[default]
    MatrixProduct,
}

impl SignConvention {
    fn epsilon_factor(self) -> f64 {
        match self {
            SignConvention::Published => 1.0,
            SignConvention::MatrixProduct => -1.0,
        }
    }
}

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Spatial beam-splitter: Hadamard on the arm index within each clock state.
pub fn u_bs() -> Unitary4 {
    let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    Unitary4 {
        entries: [
            [s, s, ZERO, ZERO],
            [s, -s, ZERO, ZERO],
            [ZERO, ZERO, s, s],
            [ZERO, ZERO, s, -s],
        ],
    }
}

/// π/2 pulse on the clock transition, applied in both arms.
pub fn u_pi_half() -> Unitary4 {
    let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    Unitary4 {
        entries: [
            [s, ZERO, -s, ZERO],
            [ZERO, s, ZERO, -s],
            [s, ZERO, s, ZERO],
            [ZERO, s, ZERO, s],
        ],
    }
}

/// π pulse on the clock transition in the lower arm only; the upper arm is
/// untouched. A signed permutation: g;2 → e;2 and e;2 → −g;2.
pub fn u_pi_lower() -> Unitary4 {
    Unitary4 {
        entries: [
            [ONE, ZERO, ZERO, ZERO],
            [ZERO, ZERO, ZERO, -ONE],
            [ZERO, ZERO, ONE, ZERO],
            [ZERO, ONE, ZERO, ZERO],
        ],
    }
}

/// Phase accumulation for a duration T, in the rotating frame of [`u_rot`]:
/// diag(1, e^{−iδT}, e^{i(Δ+ε)T}, e^{i(Δ−δ)T}).
pub fn u_phase(p: &SequenceParams) -> Unitary4 {
    let t = p.duration_s;
    let delta = p.lower_detuning_rad_per_s;
    let drive = p.drive_detuning_rad_per_s;
    let eps = p.redshift_rad_per_s;
    let phase = |theta: f64| C64::from_polar(1.0, theta);
    Unitary4 {
        entries: [
            [ONE, ZERO, ZERO, ZERO],
            [ZERO, phase(-delta * t), ZERO, ZERO],
            [ZERO, ZERO, phase((drive + eps) * t), ZERO],
            [ZERO, ZERO, ZERO, phase((drive - delta) * t)],
        ],
    }
}

/// Rotating-frame transformation diag(1, 1, e^{iωT}, e^{iωT}).
pub fn u_rot(p: &SequenceParams) -> Unitary4 {
    let phase = C64::from_polar(1.0, p.drive_frequency_rad_per_s * p.duration_s);
    Unitary4 {
        entries: [
            [ONE, ZERO, ZERO, ZERO],
            [ZERO, ONE, ZERO, ZERO],
            [ZERO, ZERO, phase, ZERO],
            [ZERO, ZERO, ZERO, phase],
        ],
    }
}

/// Full interferometer output state for an atom prepared in |g;1⟩.
pub fn final_state(p: &SequenceParams) -> StateVector4 {
    let mut state = StateVector4::basis(G1);
    state = u_pi_half().apply(&state);
    state = u_bs().apply(&state);
    state = u_phase(p).apply(&state);
    state = u_pi_lower().apply(&state);
    state = u_bs().dagger().apply(&state);
    state = u_pi_half().dagger().apply(&state);
    u_rot(p).dagger().apply(&state)
}

/// Joint exit-port × clock-state probabilities when the wavepacket collapses
/// to one arm right after splitting.
///
/// The post-splitting density matrix has its arm-1/arm-2 coherences zeroed;
/// the remaining pulses act as usual. Returned in basis order
/// (g;1, g;2, e;1, e;2). The port marginal is exactly 1/2 per port, and the
/// clock-state marginal coincides with the coherent one.
pub fn collapsed_joint_probabilities(p: &SequenceParams) -> [f64; 4] {
    let mut split = StateVector4::basis(G1);
    split = u_pi_half().apply(&split);
    split = u_bs().apply(&split);
    let amps = split.amplitudes();

    // ρ' = Π₁ρΠ₁ + Π₂ρΠ₂ with Π_l projecting onto arm l ∈ {1, 2}.
    let mut rho = [[ZERO; 4]; 4];
    let arm_of = |idx: usize| idx % 2; // G1,E1 ↔ even, G2,E2 ↔ odd
    for i in 0..4 {
        for j in 0..4 {
            if arm_of(i) == arm_of(j) {
                rho[i][j] = amps[i] * amps[j].conj();
            }
        }
    }

    let remainder = u_rot(p)
        .dagger()
        .compose(&u_pi_half().dagger())
        .compose(&u_bs().dagger())
        .compose(&u_pi_lower())
        .compose(&u_phase(p));
    let m = remainder.entries();
    let rho_final = mat_mul(m, &mat_mul(&rho, &mat_dagger(m)));
    [
        rho_final[G1][G1].re,
        rho_final[G2][G2].re,
        rho_final[E1][E1].re,
        rho_final[E2][E2].re,
    ]
}

/// Closed-form upper-port probability
/// P₁ = ½[1 − sin(T(δ − ε'/2))·sin(T(Δ − ε'/2))] with ε' set by the sign
/// convention.
pub fn closed_form_p1(p: &SequenceParams, convention: SignConvention) -> f64 {
    let eps = convention.epsilon_factor() * p.redshift_rad_per_s;
    let t = p.duration_s;
    let s_lower = (t * (p.lower_detuning_rad_per_s - eps / 2.0)).sin();
    let s_drive = (t * (p.drive_detuning_rad_per_s - eps / 2.0)).sin();
    0.5 * (1.0 - s_lower * s_drive)
}

/// Closed-form clock-ground-state probability
/// P_g = ½[1 + sin(T(Δ − ε'/2))·sin(Tε'/2)] with ε' set by the sign
/// convention. Independent of δ.
pub fn closed_form_pg(p: &SequenceParams, convention: SignConvention) -> f64 {
    let eps = convention.epsilon_factor() * p.redshift_rad_per_s;
    let t = p.duration_s;
    let s_drive = (t * (p.drive_detuning_rad_per_s - eps / 2.0)).sin();
    0.5 * (1.0 + s_drive * (t * eps / 2.0).sin())
}

/// Fringe amplitude of the clock-state oscillations over one drive period,
/// V = sin(Tε/2).
pub fn visibility(duration_s: f64, epsilon: f64) -> Result<f64> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(invalid_input("duration must be positive"));
    }
    Ok((duration_s * epsilon / 2.0).sin())
}

/// Small-ε visibility of the same sequence without the lower-arm π pulse,
/// V ≈ 1 − (Tε)²/8. Quadratic in ε, hence far less sensitive; used only for
/// scaling comparisons.
pub fn visibility_no_pi_pulse(duration_s: f64, epsilon: f64) -> Result<f64> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(invalid_input("duration must be positive"));
    }
    let te = duration_s * epsilon;
    Ok(1.0 - te * te / 8.0)
}
