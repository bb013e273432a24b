//! Simulation and design toolkit for individual addressing of two trapped-ion
//! hyperfine qubits with microwave near-field gradients.
//!
//! The crate is organised bottom-up:
//!
//! * [`hyperfine`] – ground-state level structure, dipole matrix elements and
//!   ac Zeeman coefficients.
//! * [`fieldmodel`] – per-electrode uniform + quadrupole near-field model,
//!   field nulls and π-time maps.
//! * [`trapmodel`] – two-ion crystal spacing, Mathieu parameter, micromotion and
//!   configuration A/B layouts.
//! * [`spindynamics`] – closed-form two-level evolution, crosstalk formulas and
//!   Ramsey signals.
//! * [`addressing`] – the four addressing methods and their comparison table.
//! * [`sequencer`] – a small line-oriented pulse-sequence language.
//! * [`optimizer`] – electrode-current design and Monte-Carlo sensitivity.
//! * [`cli`] – configuration ingestion and the `nearfield` command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod addressing;
pub mod cli;
pub mod config;
pub mod constants;
pub mod fieldmodel;
pub mod hyperfine;
pub mod optimizer;
pub mod output;
pub mod sequencer;
pub mod spindynamics;
pub mod trapmodel;
pub mod units;

pub use num_complex::Complex64;

/// Angular frequency from an ordinary frequency in Hz.
#[inline]
pub fn angular(hz: f64) -> f64 {
    std::f64::consts::TAU * hz
}

/// Ordinary frequency in Hz from an angular frequency.
#[inline]
pub fn ordinary(rad_per_s: f64) -> f64 {
    rad_per_s / std::f64::consts::TAU
}
