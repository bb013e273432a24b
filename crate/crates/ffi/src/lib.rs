//! C interface to `nearfield`.
//!
//! All quantities are SI: tesla, metres, seconds, kilograms, and angular
//! frequencies in rad/s. Every fallible function returns an [`NfStatus`];
//! on failure the message is available from [`nf_last_error`] on the same
//! thread. Objects are opaque handles released with their `_free` function.
//!
//! # Safety
//!
//! Pointer arguments must be null or valid for the number of elements the
//! function documents (one unless stated otherwise); handles must come from
//! this library and not have been freed.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::Vector2;
use nearfield::addressing::Method;
use nearfield::constants::AtomParameters;
use nearfield::fieldmodel::{DriveConfiguration, FieldModel, QuantizationAxis};
use nearfield::hyperfine::{self, LevelLabel, LevelSet, QubitPair};
use nearfield::optimizer::{solve_currents, DesignTarget};
use nearfield::sequencer::{self, ExecMode, ExecutionModel, SequenceProgram};
use nearfield::spindynamics;
use nearfield::trapmodel::{two_ion_spacing, TrapParameters, DEFAULT_SWITCH_TIME};
use nearfield::Complex64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    ModelError = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NfComplex {
    pub re: f64,
    pub im: f64,
}

impl From<NfComplex> for Complex64 {
    fn from(c: NfComplex) -> Self {
        Complex64::new(c.re, c.im)
    }
}

impl From<Complex64> for NfComplex {
    fn from(c: Complex64) -> Self {
        NfComplex { re: c.re, im: c.im }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NfMethod {
    I = 1,
    Ii = 2,
    Iii = 3,
    Iv = 4,
}

/// Rates (rad/s) used to resolve pulses when executing a program. Targeted
/// pulses address qubit 2 at `addressed_rate` and leak `spectator_rate`
/// onto qubit 1 under methods I and II.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NfExecutionModel {
    pub method: NfMethod,
    pub addressed_rate: f64,
    pub spectator_rate: f64,
    pub acz_rate_q1: f64,
    pub acz_rate_q2: f64,
    pub global_rate: f64,
    pub splitting: f64,
    pub detection_error: f64,
}

/// Eigenstates of the ground-state hyperfine Hamiltonian at one static field.
pub struct NfLevelSet(LevelSet);

/// Electrode basis fields and quantization axis.
pub struct NfFieldModel(FieldModel);

/// A parsed pulse-sequence program.
pub struct NfProgram(SequenceProgram);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(NfStatus, String);

fn set_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            NfStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NfStatus::Panic
        }
    }
}

fn model_err(e: impl std::fmt::Display) -> Failure {
    Failure(NfStatus::ModelError, e.to_string())
}

fn invalid(message: &str) -> Failure {
    Failure(NfStatus::InvalidArgument, message.to_string())
}

fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: the caller passes either null or a valid, writable pointer.
    unsafe { p.as_mut() }.ok_or_else(|| Failure(NfStatus::NullPointer, format!("`{name}` is null")))
}

fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    // SAFETY: handles are produced by this library and not yet freed.
    unsafe { p.as_ref() }.ok_or_else(|| Failure(NfStatus::NullPointer, format!("`{name}` is null")))
}

fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(NfStatus::NullPointer, format!("`{name}` is null")));
    }
    // SAFETY: non-null and NUL-terminated per the API contract.
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| invalid(&format!("`{name}` is not UTF-8")))
}

fn array<'a, T, const N: usize>(p: *const T, name: &str) -> Result<&'a [T; N], Failure> {
    if p.is_null() {
        return Err(Failure(NfStatus::NullPointer, format!("`{name}` is null")));
    }
    // SAFETY: the caller provides N readable elements.
    Ok(unsafe { &*(p as *const [T; N]) })
}

fn array_mut<'a, T, const N: usize>(p: *mut T, name: &str) -> Result<&'a mut [T; N], Failure> {
    if p.is_null() {
        return Err(Failure(NfStatus::NullPointer, format!("`{name}` is null")));
    }
    // SAFETY: the caller provides N writable elements.
    Ok(unsafe { &mut *(p as *mut [T; N]) })
}

/// Copies `text` and a terminating NUL into `buf` if it fits; `*needed`
/// receives the required size including the NUL.
fn copy_out(text: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), Failure> {
    let bytes = text.as_bytes();
    if !needed.is_null() {
        // SAFETY: checked non-null above.
        unsafe { *needed = bytes.len() + 1 };
    }
    if buf.is_null() || len < bytes.len() + 1 {
        return Err(Failure(NfStatus::BufferTooSmall, format!("need {} bytes", bytes.len() + 1)));
    }
    // SAFETY: `buf` has room for `len` bytes.
    unsafe {
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, bytes.len());
        *buf.add(bytes.len()) = 0;
    }
    Ok(())
}

fn boxed<T>(value: T, dst: *mut *mut T, name: &str) -> Result<(), Failure> {
    let slot = out(dst, name)?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failed call on this thread ("" after a success).
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn nf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Field-independent point of the |3,1> <-> |2,1> clock transition of 25Mg+.
#[no_mangle]
pub unsafe extern "C" fn nf_clock_point(field_t: *mut f64, frequency: *mut f64) -> NfStatus {
    guard(|| {
        let (field_t, frequency) = (out(field_t, "field_t")?, out(frequency, "frequency")?);
        let atom = AtomParameters::mg25();
        let q = QubitPair::default();
        let b = hyperfine::field_independent_point(&atom, q.down, q.up, (1e-3, 40e-3)).map_err(model_err)?;
        let levels = hyperfine::diagonalize(&atom, b).map_err(model_err)?;
        *frequency = hyperfine::transition_frequency(&levels, q.down, q.up).map_err(model_err)?;
        *field_t = b;
        Ok(())
    })
}

/// 25Mg+ levels at `field_t`.
#[no_mangle]
pub unsafe extern "C" fn nf_levels_new(field_t: f64, levels: *mut *mut NfLevelSet) -> NfStatus {
    guard(|| {
        let set = hyperfine::diagonalize(&AtomParameters::mg25(), field_t).map_err(model_err)?;
        boxed(NfLevelSet(set), levels, "levels")
    })
}

#[no_mangle]
pub unsafe extern "C" fn nf_levels_free(levels: *mut NfLevelSet) {
    if !levels.is_null() {
        drop(Box::from_raw(levels));
    }
}

/// Angular frequency of |f_a, m_a> <-> |f_b, m_b>.
#[no_mangle]
pub unsafe extern "C" fn nf_levels_transition_frequency(
    levels: *const NfLevelSet,
    f_a: f64,
    m_a: f64,
    f_b: f64,
    m_b: f64,
    frequency: *mut f64,
) -> NfStatus {
    guard(|| {
        let l = handle(levels, "levels")?;
        *out(frequency, "frequency")? =
            hyperfine::transition_frequency(&l.0, LevelLabel::new(f_a, m_a), LevelLabel::new(f_b, m_b)).map_err(model_err)?;
        Ok(())
    })
}

/// Rabi rate of the clock qubit for the given parallel and perpendicular
/// field amplitudes.
#[no_mangle]
pub unsafe extern "C" fn nf_levels_qubit_rabi_rate(
    levels: *const NfLevelSet,
    b_parallel: NfComplex,
    b_perpendicular: NfComplex,
    rate: *mut f64,
) -> NfStatus {
    guard(|| {
        let l = handle(levels, "levels")?;
        let q = QubitPair::default();
        *out(rate, "rate")? =
            hyperfine::rabi_rate(&l.0, q.down, q.up, b_parallel.into(), b_perpendicular.into()).map_err(model_err)?;
        Ok(())
    })
}

/// Spectator flip probability during a resonant π pulse on the addressed ion.
#[no_mangle]
pub unsafe extern "C" fn nf_crosstalk_resonant_pi(addressed: f64, spectator: f64, probability: *mut f64) -> NfStatus {
    guard(|| {
        *out(probability, "probability")? = spindynamics::crosstalk_resonant_pi(addressed, spectator).map_err(model_err)?;
        Ok(())
    })
}

/// Off-resonant Rabi flip probability after time `t`.
#[no_mangle]
pub extern "C" fn nf_flip_probability(rabi_rate: f64, detuning: f64, t: f64) -> f64 {
    spindynamics::flip_probability(rabi_rate, detuning, t)
}

/// Equilibrium separation of two singly charged ions.
#[no_mangle]
pub unsafe extern "C" fn nf_two_ion_spacing(
    rf_frequency: f64,
    axial_frequency: f64,
    radial_frequency: f64,
    ion_mass: f64,
    spacing: *mut f64,
) -> NfStatus {
    guard(|| {
        let spacing = out(spacing, "spacing")?;
        let trap = TrapParameters::new(rf_frequency, axial_frequency, radial_frequency, ion_mass)
            .map_err(|e| invalid(&e.to_string()))?;
        *spacing = two_ion_spacing(&trap);
        Ok(())
    })
}

/// The bundled three-electrode fixture with a 15° quantization axis.
#[no_mangle]
pub unsafe extern "C" fn nf_field_model_default(model: *mut *mut NfFieldModel) -> NfStatus {
    guard(|| boxed(NfFieldModel(FieldModel::default_fixture()), model, "model"))
}

/// Loads a basis fixture (TOML) with the axis at `axis_angle_deg` from z in
/// the y-z plane.
#[no_mangle]
pub unsafe extern "C" fn nf_field_model_load(path: *const c_char, axis_angle_deg: f64, model: *mut *mut NfFieldModel) -> NfStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        let axis = QuantizationAxis::from_yz_angle_deg(axis_angle_deg);
        let m = FieldModel::from_fixture_file(Path::new(path), axis).map_err(|e| match e {
            nearfield::fieldmodel::FieldError::Parse(_) => Failure(NfStatus::ParseError, e.to_string()),
            other => model_err(other),
        })?;
        boxed(NfFieldModel(m), model, "model")
    })
}

#[no_mangle]
pub unsafe extern "C" fn nf_field_model_free(model: *mut NfFieldModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// (B_x, B_z) at (x, z) for three electrode currents.
#[no_mangle]
pub unsafe extern "C" fn nf_field_model_field_at(
    model: *const NfFieldModel,
    currents: *const NfComplex,
    x: f64,
    z: f64,
    field: *mut NfComplex,
) -> NfStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let c = array::<_, 3>(currents, "currents")?;
        let f = array_mut::<_, 2>(field, "field")?;
        let drive = DriveConfiguration::new(c.map(Complex64::from), 0.0);
        let b = m.0.field_at(&drive, Vector2::new(x, z));
        *f = [b[0].into(), b[1].into()];
        Ok(())
    })
}

/// Position of the minimum of |B|² and the residual |B|² there.
#[no_mangle]
pub unsafe extern "C" fn nf_field_model_find_null(
    model: *const NfFieldModel,
    currents: *const NfComplex,
    x: *mut f64,
    z: *mut f64,
    residual_sq: *mut f64,
) -> NfStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let c = array::<_, 3>(currents, "currents")?;
        let (x, z, residual_sq) = (out(x, "x")?, out(z, "z")?, out(residual_sq, "residual_sq")?);
        let null = m.0.find_null(&DriveConfiguration::new(c.map(Complex64::from), 0.0)).map_err(model_err)?;
        (*x, *z, *residual_sq) = (null.position.x, null.position.y, null.residual_sq);
        Ok(())
    })
}

/// Currents placing a field null at (null_x, null_z) with |dB_par/dd| equal
/// to `gradient` (T/m) along (dir_x, dir_z).
#[no_mangle]
pub unsafe extern "C" fn nf_field_model_solve_currents(
    model: *const NfFieldModel,
    null_x: f64,
    null_z: f64,
    gradient: f64,
    dir_x: f64,
    dir_z: f64,
    currents: *mut NfComplex,
) -> NfStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let dst = array_mut::<_, 3>(currents, "currents")?;
        let target = DesignTarget::new(Vector2::new(null_x, null_z), gradient, Vector2::new(dir_x, dir_z), 0.0)
            .map_err(|e| invalid(&e.to_string()))?;
        let drive = solve_currents(&m.0, &target).map_err(model_err)?;
        *dst = drive.currents.map(NfComplex::from);
        Ok(())
    })
}

/// Parses a pulse-sequence script.
#[no_mangle]
pub unsafe extern "C" fn nf_program_parse(text: *const c_char, program: *mut *mut NfProgram) -> NfStatus {
    guard(|| {
        let text = c_str(text, "text")?;
        let p = sequencer::parse(text).map_err(|e| Failure(NfStatus::ParseError, e.to_string()))?;
        boxed(NfProgram(p), program, "program")
    })
}

#[no_mangle]
pub unsafe extern "C" fn nf_program_free(program: *mut NfProgram) {
    if !program.is_null() {
        drop(Box::from_raw(program));
    }
}

/// Number of instructions, counting those inside branches.
#[no_mangle]
pub unsafe extern "C" fn nf_program_len(program: *const NfProgram, len: *mut usize) -> NfStatus {
    guard(|| {
        *out(len, "len")? = handle(program, "program")?.0.flat_len();
        Ok(())
    })
}

/// Canonical text of the program. Returns `BufferTooSmall` with `*needed`
/// set when `buf` is null or shorter than `*needed` bytes.
#[no_mangle]
pub unsafe extern "C" fn nf_program_format(program: *const NfProgram, buf: *mut c_char, len: usize, needed: *mut usize) -> NfStatus {
    guard(|| copy_out(&sequencer::format(&handle(program, "program")?.0), buf, len, needed))
}

/// Exact final P(down) of both qubits and the probability of ending with
/// 0, 1 or 2 bright ions at the last detection.
#[no_mangle]
pub unsafe extern "C" fn nf_program_execute(
    program: *const NfProgram,
    model: *const NfExecutionModel,
    p_down: *mut f64,
    bright: *mut f64,
) -> NfStatus {
    guard(|| {
        let p = handle(program, "program")?;
        let m = handle(model, "model")?;
        let p_down = array_mut::<_, 2>(p_down, "p_down")?;
        let bright = array_mut::<_, 3>(bright, "bright")?;
        let method = match m.method {
            NfMethod::I => Method::I,
            NfMethod::Ii => Method::II,
            NfMethod::Iii => Method::III,
            NfMethod::Iv => Method::IV,
        };
        let exec = ExecutionModel {
            method,
            addressed_rate: m.addressed_rate,
            spectator_rate: m.spectator_rate,
            acz_rates: [m.acz_rate_q1, m.acz_rate_q2],
            global_rate: m.global_rate,
            splitting: m.splitting,
            switch_time: DEFAULT_SWITCH_TIME,
            phase_slip: 0.0,
            detection_error: m.detection_error,
            preparation_error: 0.0,
        };
        let trace = sequencer::execute(&p.0, &exec, ExecMode::Deterministic).map_err(model_err)?;
        *p_down = trace.final_p_down;
        let detections = trace.outcomes.iter().map(|o| o.records.len()).max().unwrap_or(0);
        *bright = [0.0; 3];
        for o in &trace.outcomes {
            if let Some(r) = o.records.last() {
                bright[r.bright_count as usize] += o.probability;
            }
        }
        if detections == 0 {
            *bright = [f64::NAN; 3];
        }
        Ok(())
    })
}
