//! Physical constants, atom/trap/geometry specifications, and derived
//! quantities.
//!
//! Everything here is a pure function of its inputs; the same inputs give
//! bit-identical outputs, which keeps golden CLI output stable.

use serde::{Deserialize, Serialize};

use crate::{invalid_input, Result};

/// Fundamental constants, CODATA 2018. Fixed at construction; there is no
/// runtime configurability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysicalConstants {
    /// Speed of light in vacuum (m/s).
    pub c: f64,
    /// Reduced Planck constant (J·s).
    pub hbar: f64,
    /// Boltzmann constant (J/K).
    pub k_b: f64,
    /// Standard gravitational acceleration (m/s²).
    pub g_earth: f64,
}

/// Atomic mass constant (kg), CODATA 2018.
pub const ATOMIC_MASS_KG: f64 = 1.66053906660e-27;

impl PhysicalConstants {
    pub const fn codata2018() -> Self {
        Self {
            c: 299_792_458.0,
            hbar: 1.054_571_817e-34,
            k_b: 1.380_649e-23,
            g_earth: 9.806_65,
        }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::codata2018()
    }
}

/// Clock atom specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub name: String,
    /// Atomic mass (kg).
    pub mass_kg: f64,
    /// Clock transition wavelength (m).
    pub clock_wavelength_m: f64,
    /// Magic trapping wavelength (m).
    pub magic_wavelength_m: f64,
}

impl AtomSpec {
    /// ¹⁷¹Yb with the ¹S₀–³P₀ clock transition at 578 nm, trapped at the
    /// 759 nm magic wavelength.
    pub fn yb171() -> Self {
        Self {
            name: "171Yb".to_owned(),
            mass_kg: 170.936_330_2 * ATOMIC_MASS_KG,
            clock_wavelength_m: 578e-9,
            magic_wavelength_m: 759e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass_kg > 0.0) || !self.mass_kg.is_finite() {
            return Err(invalid_input("atom mass must be positive"));
        }
        if !(self.clock_wavelength_m > 0.0) || !self.clock_wavelength_m.is_finite() {
            return Err(invalid_input("clock wavelength must be positive"));
        }
        if !(self.magic_wavelength_m > 0.0) || !self.magic_wavelength_m.is_finite() {
            return Err(invalid_input("magic wavelength must be positive"));
        }
        Ok(())
    }
}

impl Default for AtomSpec {
    fn default() -> Self {
        Self::yb171()
    }
}

/// Optical tweezer specification. The depth is carried both as a temperature
/// and as an energy; the two are locked together at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrapSpec {
    /// Trap depth V₀ as a temperature (K).
    pub depth_temperature_k: f64,
    /// Trap depth V₀ as an energy (J), equal to k_B times the temperature.
    pub depth_energy_j: f64,
    /// Beam waist w (m).
    pub waist_m: f64,
}

impl TrapSpec {
    pub fn from_temperature(depth_k: f64, waist_m: f64) -> Self {
        Self {
            depth_temperature_k: depth_k,
            depth_energy_j: PhysicalConstants::codata2018().k_b * depth_k,
            waist_m,
        }
    }

    /// 300 µK deep, 1 µm waist.
    pub fn default_tweezer() -> Self {
        Self::from_temperature(300e-6, 1e-6)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.depth_temperature_k > 0.0) || !(self.depth_energy_j > 0.0) {
            return Err(invalid_input("trap depth must be positive"));
        }
        if !(self.waist_m > 0.0) || !self.waist_m.is_finite() {
            return Err(invalid_input("trap waist must be positive"));
        }
        Ok(())
    }
}

impl Default for TrapSpec {
    fn default() -> Self {
        Self::default_tweezer()
    }
}

impl<'de> Deserialize<'de> for TrapSpec {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            depth_temperature_k: f64,
            waist_m: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        Ok(TrapSpec::from_temperature(raw.depth_temperature_k, raw.waist_m))
    }
}

/// Interferometer geometry: arm 1 is the upper arm (higher gravitational
/// potential), arm 2 the lower one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// Height difference h between the arms (m).
    pub arm_separation_m: f64,
    /// Phase-accumulation duration T (s).
    pub phase_duration_s: f64,
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        if self.arm_separation_m < 0.0 || !self.arm_separation_m.is_finite() {
            return Err(invalid_input("arm separation must be non-negative"));
        }
        if !(self.phase_duration_s > 0.0) || !self.phase_duration_s.is_finite() {
            return Err(invalid_input("phase duration must be positive"));
        }
        Ok(())
    }
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            arm_separation_m: 10e-3,
            phase_duration_s: 10.0,
        }
    }
}

/// Angular frequency ω₀ = 2πc/λ of the clock transition (rad/s).
pub fn clock_angular_frequency(atom: &AtomSpec) -> Result<f64> {
    if !(atom.clock_wavelength_m > 0.0) || !atom.clock_wavelength_m.is_finite() {
        return Err(invalid_input("clock wavelength must be positive"));
    }
    let c = PhysicalConstants::codata2018().c;
    Ok(std::f64::consts::TAU * c / atom.clock_wavelength_m)
}

/// Gravitational redshift between the arms, expressed as an angular frequency:
/// ε = (ω₀/c²)·g·h (rad/s).
///
/// h ≥ 0 by the fixed arm-ordering convention (arm 1 above arm 2).
pub fn gravitational_redshift(omega0: f64, g: f64, h: f64) -> Result<f64> {
    if h < 0.0 || !h.is_finite() {
        return Err(invalid_input(
            "arm separation must be non-negative (arm 1 is the upper arm by convention)",
        ));
    }
    let c = PhysicalConstants::codata2018().c;
    Ok(omega0 * g * h / (c * c))
}

/// Rayleigh range z_R = π w²/λ of the trapping beam (m), evaluated at the
/// magic wavelength.
pub fn rayleigh_range(atom: &AtomSpec, trap: &TrapSpec) -> f64 {
    std::f64::consts::PI * trap.waist_m * trap.waist_m / atom.magic_wavelength_m
}

/// Harmonic trap frequencies (ω_radial, ω_axial) of a Gaussian tweezer
/// (rad/s).
///
/// Second-order expansion of the optical dipole potential around the focus:
/// ω_r = sqrt(4V₀/(m w²)) from the transverse Gaussian profile, and
/// ω_z = sqrt(2V₀/(m z_R²)) from the on-axis Lorentzian profile with
/// z_R = π w²/λ_magic.
pub fn trap_frequencies(atom: &AtomSpec, trap: &TrapSpec) -> Result<(f64, f64)> {
    atom.validate()?;
    trap.validate()?;
    let v0 = trap.depth_energy_j;
    let m = atom.mass_kg;
    let w = trap.waist_m;
    let z_r = rayleigh_range(atom, trap);
    let omega_radial = (4.0 * v0 / (m * w * w)).sqrt();
    let omega_axial = (2.0 * v0 / (m * z_r * z_r)).sqrt();
    Ok((omega_radial, omega_axial))
}

/// Lamb-Dicke parameter η = (2π/λ_clock)·x₀ with the ground-state extent
/// x₀ = sqrt(ħ/(2mω)).
pub fn lamb_dicke(atom: &AtomSpec, omega_trap: f64) -> Result<f64> {
    atom.validate()?;
    if !(omega_trap > 0.0) || !omega_trap.is_finite() {
        return Err(invalid_input("trap frequency must be positive"));
    }
    let hbar = PhysicalConstants::codata2018().hbar;
    let x0 = (hbar / (2.0 * atom.mass_kg * omega_trap)).sqrt();
    Ok(std::f64::consts::TAU / atom.clock_wavelength_m * x0)
}

/// All derived quantities for one (atom, trap, geometry) configuration, in
/// the layout printed by the `params` CLI subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct DerivedQuantities {
    pub clock_angular_frequency_rad_per_s: f64,
    pub redshift_rad_per_s: f64,
    pub radial_trap_frequency_rad_per_s: f64,
    pub axial_trap_frequency_rad_per_s: f64,
    pub lamb_dicke_radial: f64,
    pub lamb_dicke_axial: f64,
    pub rayleigh_range_m: f64,
    /// Fringe visibility sin(Tε/2) at the configured phase duration.
    pub visibility: f64,
}

/// Evaluate the full derived-quantity set for a configuration.
pub fn derive_quantities(
    atom: &AtomSpec,
    trap: &TrapSpec,
    geometry: &Geometry,
) -> Result<DerivedQuantities> {
    atom.validate()?;
    trap.validate()?;
    geometry.validate()?;
    let consts = PhysicalConstants::codata2018();
    let omega0 = clock_angular_frequency(atom)?;
    let epsilon = gravitational_redshift(omega0, consts.g_earth, geometry.arm_separation_m)?;
    let (omega_r, omega_z) = trap_frequencies(atom, trap)?;
    Ok(DerivedQuantities {
        clock_angular_frequency_rad_per_s: omega0,
        redshift_rad_per_s: epsilon,
        radial_trap_frequency_rad_per_s: omega_r,
        axial_trap_frequency_rad_per_s: omega_z,
        lamb_dicke_radial: lamb_dicke(atom, omega_r)?,
        lamb_dicke_axial: lamb_dicke(atom, omega_z)?,
        rayleigh_range_m: rayleigh_range(atom, trap),
        visibility: crate::sequence::visibility(geometry.phase_duration_s, epsilon)?,
    })
}
