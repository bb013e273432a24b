//! Closed-form two-level dynamics.
//!
//! A pulse applies U = exp(−iHt) with
//!
//! ```text
//! H = (Ω/2)(cos φ σ_x + sin φ σ_y) + (Δ/2) σ_z
//! ```
//!
//! in the basis (|↑⟩, |↓⟩) where σ_z|↑⟩ = +|↑⟩. Two-ion states are products of
//! independent single-qubit states.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

type C = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("addressed Rabi rate must be positive")]
    ZeroAddressedRate,
    #[error("pulse Rabi rate must be positive")]
    ZeroPulseRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spin {
    Down,
    Up,
}

impl Spin {
    pub fn flipped(self) -> Spin {
        match self {
            Spin::Down => Spin::Up,
            Spin::Up => Spin::Down,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    pub down: C,
    pub up: C,
}

impl QubitState {
    pub fn down() -> Self {
        QubitState { down: C::new(1.0, 0.0), up: C::new(0.0, 0.0) }
    }

    pub fn up() -> Self {
        QubitState { down: C::new(0.0, 0.0), up: C::new(1.0, 0.0) }
    }

    pub fn basis(spin: Spin) -> Self {
        match spin {
            Spin::Down => Self::down(),
            Spin::Up => Self::up(),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.down.norm_sqr() + self.up.norm_sqr()
    }

    pub fn p_down(&self) -> f64 {
        self.down.norm_sqr()
    }

    pub fn p_up(&self) -> f64 {
        self.up.norm_sqr()
    }

    /// |⟨self|other⟩|²
    pub fn fidelity(&self, other: &QubitState) -> f64 {
        (self.down.conj() * other.down + self.up.conj() * other.up).norm_sqr()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    pub rabi_rate: f64,
    pub phase: f64,
    pub detuning: f64,
    pub duration: f64,
}

impl PulseParams {
    pub fn new(rabi_rate: f64, phase: f64, detuning: f64, duration: f64) -> Self {
        PulseParams { rabi_rate, phase, detuning, duration }
    }

    /// Free precession at `detuning` for `duration`.
    pub fn free(detuning: f64, duration: f64) -> Self {
        PulseParams { rabi_rate: 0.0, phase: 0.0, detuning, duration }
    }
}

/// Applies the closed-form pulse unitary.
pub fn evolve(state: QubitState, p: &PulseParams) -> QubitState {
    let w = p.rabi_rate.hypot(p.detuning);
    if w == 0.0 || p.duration == 0.0 {
        return state;
    }
    let half = 0.5 * w * p.duration;
    let (s, c) = half.sin_cos();
    let (nx, ny, nz) = (p.rabi_rate * p.phase.cos() / w, p.rabi_rate * p.phase.sin() / w, p.detuning / w);
    let i_s = C::new(0.0, s);
    // U = cos I − i sin (n·σ), σ_± entries: (n_x ∓ i n_y)
    let up = c * state.up - i_s * (nz * state.up + C::new(nx, -ny) * state.down);
    let down = c * state.down - i_s * (C::new(nx, ny) * state.up - nz * state.down);
    QubitState { down, up }
}

/// Off-resonant flip probability Ω²/(Ω²+Δ²)·sin²(√(Ω²+Δ²)·t/2).
pub fn flip_probability(rabi_rate: f64, detuning: f64, t: f64) -> f64 {
    let w2 = rabi_rate * rabi_rate + detuning * detuning;
    if w2 == 0.0 {
        return 0.0;
    }
    let s = (0.5 * w2.sqrt() * t).sin();
    rabi_rate * rabi_rate / w2 * s * s
}

/// Spin-flip probability of a resonant spectator during a π pulse on the
/// addressed ion: sin²((π/2)·Ω_spectator/Ω_addressed).
pub fn crosstalk_resonant_pi(addressed: f64, spectator: f64) -> Result<f64, DynamicsError> {
    if !(addressed > 0.0) {
        return Err(DynamicsError::ZeroAddressedRate);
    }
    let s = (0.5 * PI * spectator / addressed).sin();
    Ok(s * s)
}

/// Relative phase ω_acz·t accumulated between |↑⟩ and |↓⟩.
pub fn acz_phase(acz_rate: f64, t: f64) -> f64 {
    acz_rate * t
}

/// z rotation by `phase` (the ac Zeeman phase), same convention as a free
/// precession at detuning `acz_rate`.
pub fn apply_acz(state: QubitState, phase: f64) -> QubitState {
    let half = C::from_polar(1.0, -0.5 * phase);
    QubitState { down: state.down * half.conj(), up: state.up * half }
}

/// P(↑) after π/2 – free(Δ, T_R) – π/2 starting from |↓⟩; the fringe about
/// 1/2 is multiplied by exp(−T_R/τ) when a decay time is given.
pub fn ramsey_probability(
    pulse_rate: f64,
    detuning: f64,
    ramsey_time: f64,
    contrast_decay_time: Option<f64>,
) -> Result<f64, DynamicsError> {
    if !(pulse_rate > 0.0) {
        return Err(DynamicsError::ZeroPulseRate);
    }
    let half_pi = PulseParams::new(pulse_rate, 0.0, detuning, 0.5 * PI / pulse_rate);
    let s = evolve(QubitState::down(), &half_pi);
    let s = evolve(s, &PulseParams::free(detuning, ramsey_time));
    let p = evolve(s, &half_pi).p_up();
    Ok(match contrast_decay_time {
        Some(tau) => 0.5 + (p - 0.5) * (-ramsey_time / tau).exp(),
        None => p,
    })
}
