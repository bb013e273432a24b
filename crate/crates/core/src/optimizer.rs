//! Electrode-current design and control-error sensitivity.
//!
//! The design problem is a square complex linear system in the three currents:
//!
//! ```text
//! Σ_k I_k (u_k + G_k r₀)        = 0      (two rows: B_x, B_z at the null)
//! Σ_k I_k n_∥ · (G_k d̂)          = g      (gradient of B_∥ along d̂)
//! ```

use nalgebra::{Matrix3, Vector2, Vector3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addressing::{method_i, method_ii, AddressingError, Method, Setup};
use crate::fieldmodel::{DriveConfiguration, FieldError, FieldModel};
use crate::hyperfine::{rabi_rate, HyperfineError, LevelSet, QubitPair};
use crate::spindynamics::crosstalk_resonant_pi;
use crate::trapmodel::{make_layout, ConfigLabel, TrapParameters};

type C = Complex64;

/// Supported gradient targets, T/m.
pub const GRADIENT_RANGE: (f64, f64) = (1.0, 100.0);

/// Smallest acceptable singular-value ratio of the row-equilibrated design matrix.
pub const DESIGN_CONDITIONING_LIMIT: f64 = 1e-10;

pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("design system is singular: condition number {condition:.3e} (limit {:.1e})", 1.0 / DESIGN_CONDITIONING_LIMIT)]
    SingularSystem { condition: f64 },
    #[error("gradient along ({:.3}, {:.3}) is not reachable with a null at the target (condition number {condition:.3e})", direction[0], direction[1])]
    InfeasibleGradient { direction: [f64; 2], condition: f64 },
    #[error("invalid design target: {0}")]
    InvalidTarget(String),
    #[error("invalid sensitivity request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Hyperfine(#[from] HyperfineError),
    #[error(transparent)]
    Addressing(#[from] AddressingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignTarget {
    /// (x, z), metres.
    pub null_position: Vector2<f64>,
    /// |∂B_∥/∂d|, T/m.
    pub gradient_target: f64,
    /// Unit vector d̂ in the x-z plane.
    pub direction: Vector2<f64>,
    /// Drive frequency, rad/s.
    pub frequency: f64,
}

impl DesignTarget {
    pub fn new(null_position: Vector2<f64>, gradient_target: f64, direction: Vector2<f64>, frequency: f64) -> Result<Self, OptimizerError> {
        let (lo, hi) = GRADIENT_RANGE;
        if !(gradient_target >= lo && gradient_target <= hi) {
            return Err(OptimizerError::InvalidTarget(format!(
                "gradient {gradient_target} T/m outside the supported range [{lo}, {hi}] T/m"
            )));
        }
        let n = direction.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(OptimizerError::InvalidTarget("gradient direction must be a non-zero vector".into()));
        }
        Ok(DesignTarget { null_position, gradient_target, direction: direction / n, frequency })
    }
}

fn singular_ratio<const R: usize>(rows: &[[C; 3]; R]) -> f64 {
    let m = nalgebra::DMatrix::from_fn(R, 3, |r, c| rows[r][c]);
    let s = m.singular_values();
    let max = s.max();
    if max > 0.0 {
        s.min() / max
    } else {
        0.0
    }
}

fn equilibrate(row: [C; 3]) -> [C; 3] {
    let n = row.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        row.map(|v| v / n)
    } else {
        row
    }
}

/// Currents realizing a field null at the target with the requested gradient
/// of B_∥, gauge-fixed so that the first non-zero current is real positive.
pub fn solve_currents(model: &FieldModel, target: &DesignTarget) -> Result<DriveConfiguration, OptimizerError> {
    let n = model.axis.vector();
    let r0 = target.null_position;
    let d = target.direction;
    let mut rows = [[C::new(0.0, 0.0); 3]; 3];
    for b in model.bases() {
        let k = b.electrode.index();
        let at = b.uniform + b.quadrupole * r0.map(|v| C::new(v, 0.0));
        let along = b.quadrupole * d.map(|v| C::new(v, 0.0));
        rows[0][k] = at[0];
        rows[1][k] = at[1];
        rows[2][k] = along[0] * n[0] + along[1] * n[2];
    }
    let scaled = rows.map(equilibrate);
    let ratio = singular_ratio(&scaled);
    if !(ratio > DESIGN_CONDITIONING_LIMIT) {
        let null_rows = [scaled[0], scaled[1]];
        let null_ratio = singular_ratio(&null_rows);
        let condition = if ratio > 0.0 { 1.0 / ratio } else { f64::INFINITY };
        if null_ratio > DESIGN_CONDITIONING_LIMIT {
            return Err(OptimizerError::InfeasibleGradient { direction: [d[0], d[1]], condition });
        }
        return Err(OptimizerError::SingularSystem { condition });
    }
    let a = Matrix3::from_fn(|r, c| rows[r][c]);
    let rhs = Vector3::new(C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(target.gradient_target, 0.0));
    let x = a.lu().solve(&rhs).ok_or(OptimizerError::SingularSystem { condition: f64::INFINITY })?;
    let currents = gauge_fix([x[0], x[1], x[2]]);
    Ok(DriveConfiguration::new(currents, target.frequency))
}

/// Removes the global phase: the first non-zero current becomes real positive.
pub fn gauge_fix(currents: [C; 3]) -> [C; 3] {
    match currents.iter().find(|c| c.norm() > 0.0) {
        Some(first) => {
            let rot = first.conj() / first.norm();
            currents.map(|c| c * rot)
        }
        None => currents,
    }
}

/// Drive with |B_∥| equal to `b_ion1` and `b_ion2` (tesla, `b_ion2 > b_ion1`)
/// at two radial positions, obtained by placing an exact null on the line
/// through them, beyond `ion1`.
pub fn design_for_parallel_fields(
    model: &FieldModel,
    ion1: Vector2<f64>,
    ion2: Vector2<f64>,
    b_ion1: f64,
    b_ion2: f64,
    frequency: f64,
) -> Result<DriveConfiguration, OptimizerError> {
    let sep = ion2 - ion1;
    let s = sep.norm();
    if !(s > 0.0) || !(b_ion2 > b_ion1) || b_ion1 < 0.0 {
        return Err(OptimizerError::InvalidTarget(
            "need distinct ion positions and a larger field on ion 2".into(),
        ));
    }
    let direction = sep / s;
    let gradient = (b_ion2 - b_ion1) / s;
    let behind = b_ion1 / gradient;
    let target = DesignTarget::new(ion1 - direction * behind, gradient, direction, frequency)?;
    solve_currents(model, &target)
}

/// Magnitude of B_∥ that produces carrier Rabi rate `rate` on `qubit`.
pub fn parallel_field_for_rate(levels: &LevelSet, qubit: QubitPair, rate: f64) -> Result<f64, HyperfineError> {
    let per_tesla = rabi_rate(levels, qubit.down, qubit.up, C::new(1.0, 0.0), C::new(0.0, 0.0))?;
    Ok(rate / per_tesla)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    /// rms of the multiplicative amplitude error per electrode.
    pub amplitude_rms: f64,
    /// rms of the additive phase error per electrode, rad.
    pub phase_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub amplitude_error_rms: f64,
    pub phase_error_rms: f64,
    /// |B_∥| at the nominal null, tesla.
    pub residual_parallel_median: f64,
    pub residual_parallel_p90: f64,
    /// Carrier Rabi rate implied by the residual field, rad/s.
    pub spectator_rate_median: f64,
    pub spectator_rate_p90: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Currents of trial `trial`; each trial draws from its own ChaCha stream so
/// serial and parallel evaluation agree exactly.
pub fn perturbed_currents(nominal: &DriveConfiguration, errors: &ErrorModel, seed: u64, trial: u64) -> [C; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let mut out = nominal.currents;
    for c in &mut out {
        let a: f64 = StandardNormal.sample(&mut rng);
        let p: f64 = StandardNormal.sample(&mut rng);
        *c *= C::from_polar(1.0 + errors.amplitude_rms * a, errors.phase_rms * p);
    }
    out
}

/// Monte-Carlo residual B_∥ at the nominal null under per-electrode amplitude
/// and phase errors.
pub fn sensitivity(
    model: &FieldModel,
    nominal: &DriveConfiguration,
    levels: &LevelSet,
    qubit: QubitPair,
    errors: ErrorModel,
    trials: usize,
    seed: u64,
) -> Result<SensitivityReport, OptimizerError> {
    if trials < MIN_TRIALS {
        return Err(OptimizerError::InvalidRequest(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    if !(errors.amplitude_rms >= 0.0) || !(errors.phase_rms >= 0.0) {
        return Err(OptimizerError::InvalidRequest("error magnitudes must be non-negative".into()));
    }
    let null = model.find_null(nominal)?.position;
    let per_tesla = rabi_rate(levels, qubit.down, qubit.up, C::new(1.0, 0.0), C::new(0.0, 0.0))?;

    let mut residuals: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let drive = DriveConfiguration::new(perturbed_currents(nominal, &errors, seed, t), nominal.drive_frequency);
            model.sample(&drive, null).parallel_amplitude.norm()
        })
        .collect();
    residuals.sort_by(f64::total_cmp);
    let median = quantile(&residuals, 0.5);
    let p90 = quantile(&residuals, 0.9);
    Ok(SensitivityReport {
        amplitude_error_rms: errors.amplitude_rms,
        phase_error_rms: errors.phase_rms,
        residual_parallel_median: median,
        residual_parallel_p90: p90,
        // the rate is linear in |B_∥|, so quantiles map directly
        spectator_rate_median: per_tesla * median,
        spectator_rate_p90: per_tesla * p90,
        trials,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Radial offset of ion 2, metres.
    pub offset: f64,
    pub rate_addressed: f64,
    pub rate_spectator: f64,
    pub crosstalk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetSweep {
    pub rows: Vec<SweepRow>,
    /// Crosstalk never increases along the sweep.
    pub monotone_decreasing: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepSpec {
    pub method: Method,
    /// Unit direction of the ion-2 displacement (x, z).
    pub direction: Vector2<f64>,
    pub residual_floor: f64,
    pub micromotion_efficiency: f64,
}

/// Method I or II crosstalk as ion 2 is pushed further off axis with the
/// drive held fixed.
pub fn offset_sweep(
    model: &FieldModel,
    drive: &DriveConfiguration,
    levels: &LevelSet,
    qubit: QubitPair,
    trap: &TrapParameters,
    offsets: &[f64],
    spec: &SweepSpec,
) -> Result<OffsetSweep, OptimizerError> {
    let direction = spec.direction.normalize();
    let mut rows = Vec::with_capacity(offsets.len());
    for &offset in offsets {
        let layout = make_layout(trap, ConfigLabel::B, direction * offset, spec.residual_floor);
        let setup = Setup { model, levels, layout: &layout, qubit };
        let report = match spec.method {
            Method::I => method_i(&setup, drive)?,
            Method::II => method_ii(&setup, drive, trap, spec.micromotion_efficiency)?,
            other => {
                return Err(OptimizerError::InvalidRequest(format!("offset sweep supports methods I and II, not {other}")))
            }
        };
        let crosstalk = match report.crosstalk {
            Some(c) => c,
            None => crosstalk_resonant_pi(report.rate_q2, report.rate_q1).map_err(AddressingError::from)?,
        };
        rows.push(SweepRow { offset, rate_addressed: report.rate_q2, rate_spectator: report.rate_q1, crosstalk });
    }
    let monotone_decreasing = rows.windows(2).all(|w| w[1].crosstalk <= w[0].crosstalk);
    Ok(OffsetSweep { rows, monotone_decreasing })
}
