//! Atomic constants and their key/value file format.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{ATOMIC_MASS_UNIT, MHZ};

/// Built-in copy of `data/mg25.toml`.
pub const MG25_TOML: &str = include_str!("../data/mg25.toml");

#[derive(Debug, Error)]
pub enum ConstantsError {
    #[error("cannot read constants file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse constants file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid atom parameters: {0}")]
    Invalid(String),
}

/// Species parameters for the ground-state Zeeman/hyperfine Hamiltonian.
///
/// Frequencies are angular (rad/s); the g factors are in units of the Bohr
/// magneton.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomParameters {
    pub nuclear_spin: f64,
    pub electron_spin: f64,
    pub hyperfine_a: f64,
    pub g_j: f64,
    pub g_i: f64,
    pub mass: f64,
}

/// On-disk representation: ordinary frequencies, units in key names.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConstantsFile {
    nuclear_spin: f64,
    electron_spin: f64,
    #[serde(rename = "hyperfine_constant_A_MHz")]
    hyperfine_constant_a_mhz: f64,
    electronic_g_factor: f64,
    nuclear_g_factor: f64,
    mass_u: f64,
}

fn is_half_integer(v: f64) -> bool {
    v >= 0.0 && (2.0 * v - (2.0 * v).round()).abs() < 1e-12
}

impl AtomParameters {
    /// ²⁵Mg⁺ from the bundled constants file.
    pub fn mg25() -> Self {
        Self::from_toml_str(MG25_TOML).expect("bundled constants file is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConstantsError> {
        let file: ConstantsFile = toml::from_str(text)?;
        let atom = AtomParameters {
            nuclear_spin: file.nuclear_spin,
            electron_spin: file.electron_spin,
            hyperfine_a: crate::angular(file.hyperfine_constant_a_mhz * MHZ),
            g_j: file.electronic_g_factor,
            g_i: file.nuclear_g_factor,
            mass: file.mass_u * ATOMIC_MASS_UNIT,
        };
        atom.validate()?;
        Ok(atom)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConstantsError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConstantsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConstantsError> {
        if !is_half_integer(self.nuclear_spin) || !is_half_integer(self.electron_spin) {
            return Err(ConstantsError::Invalid(format!(
                "spins must be non-negative half-integers (I = {}, J = {})",
                self.nuclear_spin, self.electron_spin
            )));
        }
        if !(self.mass > 0.0) {
            return Err(ConstantsError::Invalid(format!("mass must be positive, got {}", self.mass)));
        }
        if !self.hyperfine_a.is_finite() || !self.g_j.is_finite() || !self.g_i.is_finite() {
            return Err(ConstantsError::Invalid("non-finite coupling constant".into()));
        }
        Ok(())
    }

    /// Number of product states (2I+1)(2J+1).
    pub fn dimension(&self) -> usize {
        ((2.0 * self.nuclear_spin).round() as usize + 1) * ((2.0 * self.electron_spin).round() as usize + 1)
    }
}
