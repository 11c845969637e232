//! Simulation and analysis toolkit for a tweezer-based atomic clock
//! interferometer.
//!
//! The crate is organized around the stages of the experiment:
//!
//! * [`params`] — physical constants, atom/trap/geometry specs, and the
//!   derived quantities (redshift, trap frequencies, Lamb-Dicke parameters).
//! * [`sequence`] — the exact 4-level unitary engine for the modified Ramsey
//!   sequence and its closed-form observables.
//! * [`mc`] — Monte Carlo measurement campaigns with tweezer-intensity noise.
//! * [`analysis`] — fringe fitting, redshift extraction, accuracy ensembles,
//!   and the exit-port coherence tests.
//! * [`tdse`] — 1D time-dependent Schrödinger solver for the adiabatic
//!   splitting/recombining protocol.
//! * [`config`] — JSON input schemas shared with the command-line tool.
//!
//! All stochastic code draws from counter-based per-run streams (see [`rng`]),
//! so every result is bit-reproducible from its seed at any worker count.

pub mod analysis;
pub mod config;
pub mod mc;
pub mod params;
pub mod rng;
pub mod sequence;
pub mod tdse;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical argument violates a precondition (negative height, zero
    /// wavelength, amplitude out of range, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration file is malformed or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// An iterative solver failed to converge or lost stability.
    #[error("solver error: {0}")]
    Solver(String),

    /// A least-squares fit could not be carried out.
    #[error("fit error: {0}")]
    Fit(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Format a float with 17 significant digits, the fixed width of every CSV
/// the toolkit writes; round-trips f64 exactly.
pub fn csv_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn invalid_input(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
