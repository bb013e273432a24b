//! Physical constants (CODATA 2018) and unit conversions used at I/O boundaries.

/// Bohr magneton over Planck's constant, Hz/T.
pub const BOHR_MAGNETON_HZ_PER_T: f64 = 13.996_244_936e9;

/// Bohr magneton over ħ, rad s⁻¹ T⁻¹.
pub const BOHR_MAGNETON_RAD_PER_S_T: f64 = std::f64::consts::TAU * BOHR_MAGNETON_HZ_PER_T;

/// Coulomb constant 1/(4πε₀), N m² C⁻².
pub const COULOMB_CONSTANT: f64 = 8.987_551_792_3e9;

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Unified atomic mass unit, kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

pub const MHZ: f64 = 1e6;
pub const KHZ: f64 = 1e3;
pub const MT: f64 = 1e-3;
pub const UT: f64 = 1e-6;
pub const UM: f64 = 1e-6;
pub const NM: f64 = 1e-9;
pub const US: f64 = 1e-6;
pub const MS: f64 = 1e-3;

/// Angular frequency from a value in MHz.
pub fn mhz(v: f64) -> f64 {
    crate::angular(v * MHZ)
}

/// Angular frequency from a value in kHz.
pub fn khz(v: f64) -> f64 {
    crate::angular(v * KHZ)
}

/// Angular frequency in kHz (ordinary) for reporting.
pub fn to_khz(w: f64) -> f64 {
    crate::ordinary(w) / KHZ
}
