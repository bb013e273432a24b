//! Two-ion crystal geometry, Mathieu parameter and micromotion.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{COULOMB_CONSTANT, ELEMENTARY_CHARGE, NM, UM, US};

/// Residual micromotion amplitude of an ion sitting on the RF null.
pub const DEFAULT_RESIDUAL_FLOOR: f64 = 0.42 * NM;

/// Radial displacement of ion 2 in configuration B.
pub const DEFAULT_ION2_OFFSET: f64 = 350.0 * NM;

/// Duration of an A↔B reconfiguration.
pub const DEFAULT_SWITCH_TIME: f64 = 80.0 * US;

/// Largest radial offset for which the harmonic micromotion estimate is used.
pub const HARMONIC_VALIDITY_RADIUS: f64 = 2.0 * UM;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrapError {
    #[error("trap frequencies must be positive and finite")]
    NonPositiveFrequency,
    #[error("radial frequency {radial:.4e} rad/s must stay below half the RF frequency {rf:.4e} rad/s")]
    UnstableDrive { radial: f64, rf: f64 },
    #[error("ion mass and charge must be positive")]
    NonPositiveMassOrCharge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapParameters {
    pub rf_frequency: f64,
    pub axial_frequency: f64,
    pub radial_frequency: f64,
    pub ion_mass: f64,
    pub ion_charge: f64,
}

impl TrapParameters {
    /// Singly charged ion of mass `ion_mass` with frequencies in rad/s.
    pub fn new(rf_frequency: f64, axial_frequency: f64, radial_frequency: f64, ion_mass: f64) -> Result<Self, TrapError> {
        let trap = TrapParameters { rf_frequency, axial_frequency, radial_frequency, ion_mass, ion_charge: ELEMENTARY_CHARGE };
        trap.validate()?;
        Ok(trap)
    }

    pub fn validate(&self) -> Result<(), TrapError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.rf_frequency) || !positive(self.axial_frequency) || !positive(self.radial_frequency) {
            return Err(TrapError::NonPositiveFrequency);
        }
        if !(self.radial_frequency < 0.5 * self.rf_frequency) {
            return Err(TrapError::UnstableDrive { radial: self.radial_frequency, rf: self.rf_frequency });
        }
        if !positive(self.ion_mass) || !positive(self.ion_charge) {
            return Err(TrapError::NonPositiveMassOrCharge);
        }
        Ok(())
    }
}

/// Equilibrium separation of two ions in a harmonic axial well,
/// d = (2 k_e q² / (m ω²))^{1/3}.
pub fn two_ion_spacing(trap: &TrapParameters) -> f64 {
    let w = trap.axial_frequency;
    (2.0 * COULOMB_CONSTANT * trap.ion_charge * trap.ion_charge / (trap.ion_mass * w * w)).cbrt()
}

/// Lowest-order Mathieu q for pure RF radial confinement, q = 2√2 ω_r/ω_RF.
pub fn mathieu_q(trap: &TrapParameters) -> f64 {
    2.0 * std::f64::consts::SQRT_2 * trap.radial_frequency / trap.rf_frequency
}

/// Micromotion amplitude vector of an ion displaced by `radial_offset` (x, z)
/// from the RF null.
///
/// The driven part (q/2)·offset points along the offset; the residual floor
/// is added to it in quadrature. With zero offset the floor points along z.
pub fn micromotion_amplitude(trap: &TrapParameters, radial_offset: Vector2<f64>, residual_floor: f64) -> Vector2<f64> {
    let driven = 0.5 * mathieu_q(trap) * radial_offset.norm();
    let magnitude = driven.hypot(residual_floor);
    if magnitude == 0.0 {
        return Vector2::zeros();
    }
    let direction = if radial_offset.norm() > 0.0 { radial_offset.normalize() } else { Vector2::new(0.0, 1.0) };
    direction * magnitude
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfigLabel {
    A,
    B,
    Custom,
}

impl std::fmt::Display for ConfigLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigLabel::A => write!(f, "A"),
            ConfigLabel::B => write!(f, "B"),
            ConfigLabel::Custom => write!(f, "custom"),
        }
    }
}

/// Positions (x, y, z) and x-z micromotion amplitudes of ion 1 and ion 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonLayout {
    pub label: ConfigLabel,
    pub positions: [Vector3<f64>; 2],
    pub micromotion_amplitudes: [Vector2<f64>; 2],
    pub switch_time: f64,
}

impl IonLayout {
    pub fn custom(positions: [Vector3<f64>; 2], micromotion_amplitudes: [Vector2<f64>; 2]) -> Self {
        IonLayout { label: ConfigLabel::Custom, positions, micromotion_amplitudes, switch_time: DEFAULT_SWITCH_TIME }
    }

    /// Radial (x, z) position of ion `k` (0 or 1).
    pub fn radial(&self, k: usize) -> Vector2<f64> {
        Vector2::new(self.positions[k].x, self.positions[k].z)
    }
}

/// Configuration A (both ions on axis) or B (ion 2 displaced by `ion2_offset`).
pub fn make_layout(trap: &TrapParameters, label: ConfigLabel, ion2_offset: Vector2<f64>, residual_floor: f64) -> IonLayout {
    let d = two_ion_spacing(trap);
    let offset = if label == ConfigLabel::B { ion2_offset } else { Vector2::zeros() };
    let floor = micromotion_amplitude(trap, Vector2::zeros(), residual_floor);
    IonLayout {
        label,
        positions: [Vector3::new(0.0, -0.5 * d, 0.0), Vector3::new(offset.x, 0.5 * d, offset.y)],
        micromotion_amplitudes: [floor, micromotion_amplitude(trap, offset, residual_floor)],
        switch_time: DEFAULT_SWITCH_TIME,
    }
}
