//! Run configuration.
//!
//! Physical inputs live in one TOML file with unit-suffixed keys
//! (`rf_MHz`, `ion2_offset_nm`, ...). Relative paths are resolved against the
//! directory of the config file. Omitted file paths fall back to the built-in
//! ²⁵Mg⁺ constants and basis fixture.
#![allow(non_snake_case)]

use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::Deserialize;
use thiserror::Error;

use crate::addressing::Method;
use crate::constants::{AtomParameters, ConstantsError};
use crate::fieldmodel::{FieldError, FieldModel, QuantizationAxis};
use crate::hyperfine::{LevelLabel, QubitPair};
use crate::optimizer::ErrorModel;
use crate::trapmodel::{TrapError, TrapParameters};
use crate::units::{khz, mhz, MT, NM, UM, US, UT};

pub const DEFAULT_CONFIG_TOML: &str = include_str!("../data/default.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{path}: {source}")]
    Constants { path: String, source: ConstantsError },
    #[error("{path}: {source}")]
    Field { path: String, source: FieldError },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    atom_constants: Option<PathBuf>,
    basis_fixture: Option<PathBuf>,
    #[serde(default = "default_axis")]
    axis_angle_deg: f64,
    static_field_mT: Option<f64>,
    #[serde(default = "default_output")]
    output_dir: PathBuf,
    #[serde(default)]
    qubit: RawQubit,
    trap: RawTrap,
    layout: RawLayout,
    hyperfine: RawHyperfine,
    fieldmap: RawFieldmap,
    methods: RawMethods,
    design: RawDesign,
    sensitivity: Option<RawSensitivity>,
    sweep: RawSweep,
    sequence: RawSequence,
}

fn default_axis() -> f64 {
    15.0
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQubit {
    down: [f64; 2],
    up: [f64; 2],
}

impl Default for RawQubit {
    fn default() -> Self {
        RawQubit { down: [3.0, 1.0], up: [2.0, 1.0] }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrap {
    rf_MHz: f64,
    axial_MHz: f64,
    radial_MHz: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayout {
    ion2_offset_nm: [f64; 2],
    residual_floor_nm: f64,
    micromotion_efficiency: f64,
    switch_time_us: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHyperfine {
    field_min_mT: f64,
    field_max_mT: f64,
    points: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFieldmap {
    x_um: [f64; 2],
    z_um: [f64; 2],
    nx: usize,
    nz: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateSource {
    /// Rates injected directly.
    Rates,
    /// Rates computed from designed electrode currents.
    Fields,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMethods {
    source: RateSource,
    I: RawPair,
    II: RawPairAcz,
    III: RawPair,
    IV: RawGlobal,
    method_ii_gradient_T_per_m: f64,
    acz_detuning_MHz: f64,
    acz_fields_uT: [f64; 2],
    spectrum_span_kHz: [f64; 2],
    spectrum_points: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPair {
    q1_kHz: f64,
    q2_kHz: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPairAcz {
    q1_kHz: f64,
    q2_kHz: f64,
    acz_kHz: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGlobal {
    global_kHz: f64,
    acz_kHz: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDesign {
    null_um: [f64; 2],
    gradient_T_per_m: f64,
    direction: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSensitivity {
    amplitude_error_rms: f64,
    phase_error_rms: f64,
    trials: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    method: String,
    offsets_nm: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSequence {
    method: String,
    global_rate_kHz: f64,
    phase_slip_rad: f64,
    detection_error: f64,
    preparation_error: f64,
}

/// Rates injected per method, rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectedRates {
    pub method_i: [f64; 2],
    pub method_ii: [f64; 2],
    pub method_ii_acz: Option<f64>,
    pub method_iii: [f64; 2],
    pub method_iv_global: f64,
    pub method_iv_acz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSettings {
    pub source: RateSource,
    pub rates: InjectedRates,
    /// T/m.
    pub method_ii_gradient: f64,
    /// rad/s.
    pub acz_detuning: f64,
    /// |B_∥| targets at ion 1 and ion 2 for the σ_z drive, tesla.
    pub acz_fields: [f64; 2],
    /// Detuning span of the method IV spectrum, rad/s.
    pub spectrum_span: (f64, f64),
    pub spectrum_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSettings {
    pub method: Method,
    pub global_rate: f64,
    pub phase_slip: f64,
    pub detection_error: f64,
    pub preparation_error: f64,
}

/// Fully resolved configuration in SI units and angular frequencies.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Source file, or `None` for the built-in defaults.
    pub path: Option<PathBuf>,
    /// Raw bytes of the config, hashed into output headers.
    pub text: String,
    pub atom: AtomParameters,
    pub field_model: FieldModel,
    pub qubit: QubitPair,
    /// `None` selects the field-independent point of the qubit.
    pub static_field: Option<f64>,
    pub trap: TrapParameters,
    pub ion2_offset: Vector2<f64>,
    pub residual_floor: f64,
    pub micromotion_efficiency: f64,
    pub switch_time: f64,
    pub hyperfine_range: (f64, f64),
    pub hyperfine_points: usize,
    pub fieldmap_x: (f64, f64),
    pub fieldmap_z: (f64, f64),
    pub fieldmap_shape: (usize, usize),
    pub methods: MethodSettings,
    pub design_null: Vector2<f64>,
    pub design_gradient: f64,
    pub design_direction: Vector2<f64>,
    pub sensitivity: Option<(ErrorModel, usize)>,
    pub sweep_method: Method,
    pub sweep_offsets: Vec<f64>,
    pub sequence: SequenceSettings,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn builtin() -> Self {
        Self::from_str_at(DEFAULT_CONFIG_TOML, None).expect("built-in configuration is valid")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_str_at(&text, Some(path))
    }

    /// Parses `text` as if read from `path` (which only anchors relative paths
    /// and labels errors).
    pub fn from_str_at(text: &str, path: Option<&Path>) -> Result<Self, ConfigError> {
        let label = path.map_or("<built-in config>".to_string(), |p| p.display().to_string());
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: label.clone(), message: e.to_string() })?;
        let base = path.and_then(Path::parent).map(Path::to_path_buf).unwrap_or_default();
        let invalid = |message: String| ConfigError::Invalid { path: label.clone(), message };

        let atom = match &raw.atom_constants {
            Some(p) => {
                let p = base.join(p);
                AtomParameters::from_file(&p)
                    .map_err(|source| ConfigError::Constants { path: p.display().to_string(), source })?
            }
            None => AtomParameters::mg25(),
        };
        if !raw.axis_angle_deg.is_finite() {
            return Err(invalid("axis_angle_deg must be finite".into()));
        }
        let axis = QuantizationAxis::from_yz_angle_deg(raw.axis_angle_deg);
        let field_model = match &raw.basis_fixture {
            Some(p) => {
                let p = base.join(p);
                FieldModel::from_fixture_file(&p, axis)
                    .map_err(|source| ConfigError::Field { path: p.display().to_string(), source })?
            }
            None => {
                let mut m = FieldModel::default_fixture();
                m.axis = axis;
                m
            }
        };

        let positive = |name: &str, v: f64| -> Result<f64, ConfigError> {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(invalid(format!("{name} must be positive, got {v}")))
            }
        };
        let non_negative = |name: &str, v: f64| -> Result<f64, ConfigError> {
            if v >= 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(invalid(format!("{name} must be non-negative, got {v}")))
            }
        };
        let probability = |name: &str, v: f64| -> Result<f64, ConfigError> {
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(invalid(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        let method = |name: &str, v: &str| -> Result<Method, ConfigError> {
            v.parse::<Method>().map_err(|e| invalid(format!("{name}: {e}")))
        };
        let finite2 = |name: &str, v: [f64; 2]| -> Result<[f64; 2], ConfigError> {
            if v.iter().all(|x| x.is_finite()) {
                Ok(v)
            } else {
                Err(invalid(format!("{name} must be finite")))
            }
        };

        let qubit = QubitPair {
            down: LevelLabel::new(raw.qubit.down[0], raw.qubit.down[1]),
            up: LevelLabel::new(raw.qubit.up[0], raw.qubit.up[1]),
        };
        let static_field = raw.static_field_mT.map(|b| positive("static_field_mT", b)).transpose()?.map(|b| b * MT);

        let trap = TrapParameters::new(mhz(raw.trap.rf_MHz), mhz(raw.trap.axial_MHz), mhz(raw.trap.radial_MHz), atom.mass)
            .map_err(|e: TrapError| invalid(format!("trap: {e}")))?;

        let off = finite2("layout.ion2_offset_nm", raw.layout.ion2_offset_nm)?;
        let h = &raw.hyperfine;
        let (lo, hi) = (non_negative("hyperfine.field_min_mT", h.field_min_mT)?, positive("hyperfine.field_max_mT", h.field_max_mT)?);
        if !(hi > lo) || h.points < 2 {
            return Err(invalid("hyperfine scan needs field_max_mT > field_min_mT and at least 2 points".into()));
        }
        let fm = &raw.fieldmap;
        if fm.nx == 0 || fm.nz == 0 {
            return Err(invalid("fieldmap grid needs at least one point per axis".into()));
        }
        let fx = finite2("fieldmap.x_um", fm.x_um)?;
        let fz = finite2("fieldmap.z_um", fm.z_um)?;

        let m = &raw.methods;
        let methods = MethodSettings {
            source: m.source,
            rates: InjectedRates {
                method_i: [khz(non_negative("methods.I.q1_kHz", m.I.q1_kHz)?), khz(positive("methods.I.q2_kHz", m.I.q2_kHz)?)],
                method_ii: [
                    khz(non_negative("methods.II.q1_kHz", m.II.q1_kHz)?),
                    khz(non_negative("methods.II.q2_kHz", m.II.q2_kHz)?),
                ],
                method_ii_acz: m.II.acz_kHz.map(khz),
                method_iii: [khz(m.III.q1_kHz), khz(m.III.q2_kHz)],
                method_iv_global: khz(positive("methods.IV.global_kHz", m.IV.global_kHz)?),
                method_iv_acz: khz(m.IV.acz_kHz),
            },
            method_ii_gradient: positive("methods.method_ii_gradient_T_per_m", m.method_ii_gradient_T_per_m)?,
            acz_detuning: mhz(m.acz_detuning_MHz),
            acz_fields: [
                non_negative("methods.acz_fields_uT[0]", m.acz_fields_uT[0])? * UT,
                non_negative("methods.acz_fields_uT[1]", m.acz_fields_uT[1])? * UT,
            ],
            spectrum_span: (khz(m.spectrum_span_kHz[0]), khz(m.spectrum_span_kHz[1])),
            spectrum_points: m.spectrum_points,
        };
        if !(methods.spectrum_span.1 > methods.spectrum_span.0) || methods.spectrum_points < 2 {
            return Err(invalid("methods.spectrum_span_kHz must be increasing with at least 2 points".into()));
        }

        let d = &raw.design;
        let dir = finite2("design.direction", d.direction)?;
        let design_direction = Vector2::new(dir[0], dir[1]);
        if design_direction.norm() == 0.0 {
            return Err(invalid("design.direction must be non-zero".into()));
        }
        let sensitivity = match &raw.sensitivity {
            Some(s) => Some((
                ErrorModel {
                    amplitude_rms: non_negative("sensitivity.amplitude_error_rms", s.amplitude_error_rms)?,
                    phase_rms: non_negative("sensitivity.phase_error_rms", s.phase_error_rms)?,
                },
                s.trials,
            )),
            None => None,
        };
        let s = &raw.sequence;
        let sequence = SequenceSettings {
            method: method("sequence.method", &s.method)?,
            global_rate: khz(positive("sequence.global_rate_kHz", s.global_rate_kHz)?),
            phase_slip: s.phase_slip_rad,
            detection_error: probability("sequence.detection_error", s.detection_error)?,
            preparation_error: probability("sequence.preparation_error", s.preparation_error)?,
        };
        let null = finite2("design.null_um", d.null_um)?;

        Ok(RunConfig {
            path: path.map(Path::to_path_buf),
            text: text.to_string(),
            atom,
            field_model,
            qubit,
            static_field,
            trap,
            ion2_offset: Vector2::new(off[0], off[1]) * NM,
            residual_floor: non_negative("layout.residual_floor_nm", raw.layout.residual_floor_nm)? * NM,
            micromotion_efficiency: non_negative("layout.micromotion_efficiency", raw.layout.micromotion_efficiency)?,
            switch_time: non_negative("layout.switch_time_us", raw.layout.switch_time_us)? * US,
            hyperfine_range: (lo * MT, hi * MT),
            hyperfine_points: h.points,
            fieldmap_x: (fx[0] * UM, fx[1] * UM),
            fieldmap_z: (fz[0] * UM, fz[1] * UM),
            fieldmap_shape: (fm.nx, fm.nz),
            methods,
            design_null: Vector2::new(null[0], null[1]) * UM,
            design_gradient: d.gradient_T_per_m,
            design_direction: design_direction.normalize(),
            sensitivity,
            sweep_method: method("sweep.method", &raw.sweep.method)?,
            sweep_offsets: raw.sweep.offsets_nm.iter().map(|o| o * NM).collect(),
            sequence,
            output_dir: base.join(raw.output_dir),
        })
    }
}
