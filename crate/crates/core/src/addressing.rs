//! The four addressing methods and their comparison table.
//!
//! Every method is available either through the physical pipeline (drive
//! currents → fields at the ions → rates) or by injecting measured rates
//! directly.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fieldmodel::{DriveConfiguration, FieldModel, FieldSample};
use crate::hyperfine::{
    ac_zeeman_coefficients, rabi_rate, transition_frequency, HyperfineError, LevelSet, QubitPair,
    RESONANCE_GUARD,
};
use crate::spindynamics::{crosstalk_resonant_pi, flip_probability, DynamicsError};
use crate::trapmodel::{IonLayout, TrapParameters};
use crate::units::{to_khz, UT};

/// Minimum |Δ| / |ω_acz| for the σ_z (method III) regime.
pub const ACZ_DETUNING_RATIO: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AddressingError {
    #[error(transparent)]
    Hyperfine(#[from] HyperfineError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("cannot parse report table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    I,
    II,
    III,
    IV,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::I => "I",
            Method::II => "II",
            Method::III => "III",
            Method::IV => "IV",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "I" | "1" => Ok(Method::I),
            "II" | "2" => Ok(Method::II),
            "III" | "3" => Ok(Method::III),
            "IV" | "4" => Ok(Method::IV),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

/// One row of the method comparison. Rates are angular frequencies; for
/// method III they are σ_z rotation rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub rate_q1: f64,
    pub rate_q2: f64,
    /// `None` when unquantified (method III).
    pub crosstalk: Option<f64>,
    /// `None` when absent (method I).
    pub differential_acz: Option<f64>,
    pub notes: String,
}

/// Everything the physical pipeline needs besides the drive.
#[derive(Debug, Clone, Copy)]
pub struct Setup<'a> {
    pub model: &'a FieldModel,
    pub levels: &'a LevelSet,
    pub layout: &'a IonLayout,
    pub qubit: QubitPair,
}

impl Setup<'_> {
    fn samples(&self, drive: &DriveConfiguration) -> [FieldSample; 2] {
        [self.model.sample(drive, self.layout.radial(0)), self.model.sample(drive, self.layout.radial(1))]
    }

    fn qubit_frequency(&self) -> Result<f64, HyperfineError> {
        transition_frequency(self.levels, self.qubit.down, self.qubit.up)
    }

    fn carrier_rate(&self, s: &FieldSample) -> Result<f64, HyperfineError> {
        rabi_rate(
            self.levels,
            self.qubit.down,
            self.qubit.up,
            s.parallel_amplitude,
            Complex64::new(s.perpendicular_amplitude, 0.0),
        )
    }

    fn require_drive_at(&self, drive: &DriveConfiguration, expected: f64, what: &str) -> Result<(), AddressingError> {
        if (drive.drive_frequency - expected).abs() > RESONANCE_GUARD {
            return Err(AddressingError::PreconditionViolated(format!(
                "{what}: drive at {:.6} GHz, expected {:.6} GHz",
                crate::ordinary(drive.drive_frequency) / 1e9,
                crate::ordinary(expected) / 1e9
            )));
        }
        Ok(())
    }
}

fn check_report(r: MethodReport) -> MethodReport {
    debug_assert!(r.rate_q1 >= 0.0 && r.rate_q2 >= 0.0);
    debug_assert!(r.crosstalk.is_none_or(|c| (0.0..=1.0).contains(&c)));
    r
}

pub fn method_i_from_rates(rate_q1: f64, rate_q2: f64) -> Result<MethodReport, AddressingError> {
    Ok(check_report(MethodReport {
        method: Method::I,
        rate_q1,
        rate_q2,
        crosstalk: Some(crosstalk_resonant_pi(rate_q2, rate_q1)?),
        differential_acz: None,
        notes: String::new(),
    }))
}

/// Field null at ion 1, resonant drive on ion 2.
pub fn method_i(setup: &Setup<'_>, drive: &DriveConfiguration) -> Result<MethodReport, AddressingError> {
    setup.require_drive_at(drive, setup.qubit_frequency()?, "method I needs a resonant drive")?;
    let [s1, s2] = setup.samples(drive);
    let mut report = method_i_from_rates(setup.carrier_rate(&s1)?, setup.carrier_rate(&s2)?)?;
    report.notes = format!(
        "|B_par| ion1 = {:.4} uT, ion2 = {:.4} uT",
        s1.parallel_amplitude.norm() / UT,
        s2.parallel_amplitude.norm() / UT
    );
    Ok(report)
}

pub fn method_ii_from_rates(
    rate_q1: f64,
    rate_q2: f64,
    differential_acz: Option<f64>,
) -> Result<MethodReport, AddressingError> {
    let (crosstalk, notes) = if rate_q1 == 0.0 && rate_q2 == 0.0 {
        (0.0, "degenerate input: no micromotion sideband coupling on either ion".to_string())
    } else {
        (crosstalk_resonant_pi(rate_q2, rate_q1)?, String::new())
    };
    Ok(check_report(MethodReport {
        method: Method::II,
        rate_q1,
        rate_q2,
        crosstalk: Some(crosstalk),
        differential_acz,
        notes,
    }))
}

/// Micromotion-sideband addressing: drive at ω_q − ω_RF.
///
/// Along the micromotion trajectory B_∥ is modulated by ∇B_∥·r_mm cos(ω_RF t);
/// the tone at ω_q − ω_RF carries half of that amplitude.
pub fn method_ii(
    setup: &Setup<'_>,
    drive: &DriveConfiguration,
    trap: &TrapParameters,
    micromotion_efficiency: f64,
) -> Result<MethodReport, AddressingError> {
    let omega_q = setup.qubit_frequency()?;
    setup.require_drive_at(drive, omega_q - trap.rf_frequency, "method II drives the lower micromotion sideband")?;
    let gradient = setup.model.parallel_gradient(drive);
    let mut rates = [0.0; 2];
    for (k, rate) in rates.iter_mut().enumerate() {
        let r = setup.layout.micromotion_amplitudes[k];
        let amplitude = 0.5 * (gradient[0] * r[0] + gradient[1] * r[1]);
        *rate = micromotion_efficiency
            * rabi_rate(setup.levels, setup.qubit.down, setup.qubit.up, amplitude, Complex64::new(0.0, 0.0))?;
    }

    let coeffs = ac_zeeman_coefficients(setup.levels, setup.qubit.down, setup.qubit.up, -trap.rf_frequency)?;
    let [s1, s2] = setup.samples(drive);
    let acz = |s: &FieldSample| coeffs.shift(s.parallel_amplitude, Complex64::new(s.perpendicular_amplitude, 0.0));
    let mut report = method_ii_from_rates(rates[0], rates[1], Some(acz(&s2) - acz(&s1)))?;
    let note = format!("|B_MW| ion1 = {:.3} uT, ion2 = {:.3} uT", s1.field.norm() / UT, s2.field.norm() / UT);
    report.notes = if report.notes.is_empty() { note } else { format!("{}; {note}", report.notes) };
    Ok(report)
}

/// σ_z rates ω_acz,1 and ω_acz,2 (signed) → report with |rates|.
pub fn method_iii_from_rates(acz_q1: f64, acz_q2: f64) -> Result<MethodReport, AddressingError> {
    let notes = if acz_q1 < 0.0 || acz_q2 < 0.0 {
        format!("signed sigma_z rates: q1 = {:.4} kHz, q2 = {:.4} kHz", to_khz(acz_q1), to_khz(acz_q2))
    } else {
        String::new()
    };
    Ok(check_report(MethodReport {
        method: Method::III,
        rate_q1: acz_q1.abs(),
        rate_q2: acz_q2.abs(),
        crosstalk: None,
        differential_acz: Some(acz_q2 - acz_q1),
        notes,
    }))
}

fn acz_rates(setup: &Setup<'_>, drive: &DriveConfiguration, detuning: f64) -> Result<[f64; 2], AddressingError> {
    let coeffs = ac_zeeman_coefficients(setup.levels, setup.qubit.down, setup.qubit.up, detuning)?;
    let [s1, s2] = setup.samples(drive);
    let acz = |s: &FieldSample| coeffs.shift(s.parallel_amplitude, Complex64::new(s.perpendicular_amplitude, 0.0));
    let rates = [acz(&s1), acz(&s2)];
    let largest = rates[0].abs().max(rates[1].abs());
    if detuning.abs() < ACZ_DETUNING_RATIO * largest {
        return Err(AddressingError::PreconditionViolated(format!(
            "|detuning| = {:.3} kHz is not large compared with sigma_z rates up to {:.3} kHz",
            to_khz(detuning.abs()),
            to_khz(largest)
        )));
    }
    Ok(rates)
}

/// Differential ac Zeeman (σ_z) control with a drive detuned by `detuning`.
pub fn method_iii(
    setup: &Setup<'_>,
    drive: &DriveConfiguration,
    detuning: f64,
) -> Result<MethodReport, AddressingError> {
    let [a1, a2] = acz_rates(setup, drive, detuning)?;
    method_iii_from_rates(a1, a2)
}

pub fn method_iv_from_rates(global_rate: f64, differential_acz: f64) -> Result<MethodReport, AddressingError> {
    if !(global_rate > 0.0) {
        return Err(DynamicsError::ZeroPulseRate.into());
    }
    if !(global_rate < differential_acz.abs()) {
        return Err(AddressingError::PreconditionViolated(format!(
            "global rate {:.3} kHz must be below the splitting {:.3} kHz",
            to_khz(global_rate),
            to_khz(differential_acz.abs())
        )));
    }
    Ok(check_report(MethodReport {
        method: Method::IV,
        rate_q1: global_rate,
        rate_q2: global_rate,
        crosstalk: Some(flip_probability(global_rate, differential_acz, PI / global_rate)),
        differential_acz: Some(differential_acz),
        notes: format!(
            "square pulse; off-resonant envelope {:.3e}",
            global_rate.powi(2) / (global_rate.powi(2) + differential_acz.powi(2))
        ),
    }))
}

/// Frequency-resolved addressing: the gradient drive splits the resonances,
/// a global drive of rate `global_rate` addresses one of them.
pub fn method_iv(
    setup: &Setup<'_>,
    drive_gradient: &DriveConfiguration,
    global_rate: f64,
    detuning: f64,
) -> Result<MethodReport, AddressingError> {
    let [a1, a2] = acz_rates(setup, drive_gradient, detuning)?;
    method_iv_from_rates(global_rate, a2 - a1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    /// ω_drive − ω_q1, rad/s.
    pub detuning: f64,
    /// P(↓,1) + P(↓,2) after a π-time pulse starting from |↓↓⟩.
    pub p_down_total: f64,
}

/// Two-ion response versus drive frequency with qubit 2 shifted by
/// `differential_acz` relative to qubit 1.
pub fn spectrum_scan(global_rate: f64, differential_acz: f64, detunings: &[f64]) -> Vec<SpectrumPoint> {
    let t = PI / global_rate;
    detunings
        .iter()
        .map(|&d| SpectrumPoint {
            detuning: d,
            p_down_total: 2.0
                - flip_probability(global_rate, d, t)
                - flip_probability(global_rate, d - differential_acz, t),
        })
        .collect()
}

/// Aligned text table in kHz with crosstalk in units of 10⁻³.
pub fn table_comparison(reports: &[MethodReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8}{:>16}{:>16}{:>20}{:>20}",
        "method", "Omega_q1/2pi", "Omega_q2/2pi", "crosstalk", "d_omega_acz/2pi"
    );
    let _ = writeln!(out, "{:<8}{:>16}{:>16}{:>20}{:>20}", "", "(kHz)", "(kHz)", "(x 1e-3)", "(kHz)");
    for r in reports {
        let crosstalk = r.crosstalk.map_or("--".to_string(), |c| format!("{:.3}", c * 1e3));
        let acz = r.differential_acz.map_or("--".to_string(), |d| format!("{:.3}", to_khz(d)));
        let _ = writeln!(
            out,
            "{:<8}{:>16.3}{:>16.3}{:>20}{:>20}",
            r.method.to_string(),
            to_khz(r.rate_q1),
            to_khz(r.rate_q2),
            crosstalk,
            acz
        );
    }
    out
}

/// One JSON object per line.
pub fn reports_to_json_lines(reports: &[MethodReport]) -> String {
    reports
        .iter()
        .map(|r| serde_json::to_string(r).expect("report serializes") + "\n")
        .collect()
}

/// Inverse of [`reports_to_json_lines`]; blank lines and `#` lines are skipped.
pub fn reports_from_json_lines(text: &str) -> Result<Vec<MethodReport>, AddressingError> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .filter(|l| !l.contains("\"_header\""))
        .map(|l| serde_json::from_str(l).map_err(|e| AddressingError::Table(e.to_string())))
        .collect()
}
