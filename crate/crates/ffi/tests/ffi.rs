use std::ffi::{CStr, CString};
use std::f64::consts::PI;
use std::process::Command;
use std::ptr;

use nearfield_ffi::*;

const TAU: f64 = 2.0 * PI;

fn last_error() -> String {
    unsafe { CStr::from_ptr(nf_last_error()) }.to_string_lossy().into_owned()
}

fn khz(v: f64) -> f64 {
    TAU * v * 1e3
}

fn zero() -> NfComplex {
    NfComplex::default()
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(nf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn clock_point_and_levels() {
    let (mut b, mut w) = (0.0, 0.0);
    assert_eq!(unsafe { nf_clock_point(&mut b, &mut w) }, NfStatus::Ok);
    assert!((b * 1e3 - 21.2778).abs() < 2e-3, "{b}");
    assert!((w / TAU - 1.686462e9).abs() < 2e3, "{w}");
    assert_eq!(last_error(), "");

    let mut levels = ptr::null_mut();
    assert_eq!(unsafe { nf_levels_new(b, &mut levels) }, NfStatus::Ok);
    assert!(!levels.is_null());
    let mut f = 0.0;
    assert_eq!(unsafe { nf_levels_transition_frequency(levels, 2.0, 1.0, 3.0, 1.0, &mut f) }, NfStatus::Ok);
    assert!((f.abs() - w.abs()).abs() < 1e-6 * w.abs());

    let status = unsafe { nf_levels_transition_frequency(levels, 2.0, 1.0, 2.0, 1.0, &mut f) };
    assert_eq!(status, NfStatus::ModelError);
    assert!(!last_error().is_empty());

    let (mut r1, mut r2) = (0.0, 0.0);
    let b1 = NfComplex { re: 1e-7, im: 0.0 };
    let b2 = NfComplex { re: 2e-7, im: 0.0 };
    assert_eq!(unsafe { nf_levels_qubit_rabi_rate(levels, b1, zero(), &mut r1) }, NfStatus::Ok);
    assert_eq!(unsafe { nf_levels_qubit_rabi_rate(levels, b2, zero(), &mut r2) }, NfStatus::Ok);
    assert!(r1 > 0.0);
    assert!((r2 - 2.0 * r1).abs() < 1e-9 * r2);

    assert_eq!(unsafe { nf_levels_new(-1.0, &mut levels) }, NfStatus::ModelError);
    unsafe { nf_levels_free(levels) };
    unsafe { nf_levels_free(ptr::null_mut()) };
}

#[test]
fn null_pointers_are_reported() {
    assert_eq!(unsafe { nf_clock_point(ptr::null_mut(), ptr::null_mut()) }, NfStatus::NullPointer);
    assert!(last_error().contains("field_t"));
    let mut f = 0.0;
    assert_eq!(unsafe { nf_levels_transition_frequency(ptr::null(), 2.0, 1.0, 3.0, 1.0, &mut f) }, NfStatus::NullPointer);
    assert_eq!(unsafe { nf_program_parse(ptr::null(), ptr::null_mut()) }, NfStatus::NullPointer);
    assert_eq!(unsafe { nf_field_model_default(ptr::null_mut()) }, NfStatus::NullPointer);
}

#[test]
fn crosstalk_and_rabi_formula() {
    let mut p = 0.0;
    assert_eq!(unsafe { nf_crosstalk_resonant_pi(khz(12.84), khz(0.32), &mut p) }, NfStatus::Ok);
    let x = PI * 0.32 / 12.84 / 2.0;
    assert!((p - x.sin().powi(2)).abs() < 1e-15);
    assert!((p - 1.53e-3).abs() < 0.01e-3, "{p}");

    assert_eq!(unsafe { nf_crosstalk_resonant_pi(0.0, khz(0.32), &mut p) }, NfStatus::ModelError);
    assert!(!last_error().is_empty());

    let (r, d, t) = (khz(2.0), khz(3.0), 170e-6);
    let g = r.hypot(d);
    let expected = (r / g).powi(2) * (g * t / 2.0).sin().powi(2);
    assert!((nf_flip_probability(r, d, t) - expected).abs() < 1e-14);
}

#[test]
fn trap_spacing() {
    let mut s = 0.0;
    let mass = 25.0 * 1.660_539_066_60e-27;
    let status = unsafe { nf_two_ion_spacing(TAU * 71.6e6, TAU * 1.4e6, TAU * 6.0e6, mass, &mut s) };
    assert_eq!(status, NfStatus::Ok);
    assert!(s > 1e-6 && s < 10e-6, "{s}");

    let mut s2 = 0.0;
    unsafe { nf_two_ion_spacing(TAU * 71.6e6, TAU * 2.8e6, TAU * 6.0e6, mass, &mut s2) };
    assert!((s2 / s - 2f64.powf(-2.0 / 3.0)).abs() < 1e-9);

    let status = unsafe { nf_two_ion_spacing(TAU * 71.6e6, -1.0, TAU * 6.0e6, mass, &mut s) };
    assert_eq!(status, NfStatus::InvalidArgument);
}

#[test]
fn field_model_designs_a_null() {
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { nf_field_model_default(&mut model) }, NfStatus::Ok);
    let mut currents = [zero(); 3];
    let status = unsafe { nf_field_model_solve_currents(model, 0.0, 0.0, 7.1, 1.0, 0.0, currents.as_mut_ptr()) };
    assert_eq!(status, NfStatus::Ok, "{}", last_error());
    assert!(currents.iter().any(|c| c.re != 0.0 || c.im != 0.0));

    let mut field = [zero(); 2];
    assert_eq!(unsafe { nf_field_model_field_at(model, currents.as_ptr(), 0.0, 0.0, field.as_mut_ptr()) }, NfStatus::Ok);
    assert!(field.iter().all(|b| b.re.hypot(b.im) < 1e-15));
    unsafe { nf_field_model_field_at(model, currents.as_ptr(), 1e-6, 0.0, field.as_mut_ptr()) };
    let away = field.iter().map(|b| b.re.hypot(b.im)).fold(0.0, f64::max);
    assert!(away > 1e-6, "{away}");

    let (mut x, mut z, mut res) = (1.0, 1.0, 1.0);
    assert_eq!(unsafe { nf_field_model_find_null(model, currents.as_ptr(), &mut x, &mut z, &mut res) }, NfStatus::Ok);
    assert!(x.abs() < 1e-9 && z.abs() < 1e-9, "({x}, {z})");
    assert!(res < 1e-24);

    let status = unsafe { nf_field_model_solve_currents(model, 0.0, 0.0, 7.1, 0.0, 1.0, currents.as_mut_ptr()) };
    assert_eq!(status, NfStatus::ModelError);
    let status = unsafe { nf_field_model_solve_currents(model, 0.0, 0.0, 7.1, 0.0, 0.0, currents.as_mut_ptr()) };
    assert_eq!(status, NfStatus::InvalidArgument);

    let zeros = [zero(); 3];
    assert_eq!(unsafe { nf_field_model_find_null(model, zeros.as_ptr(), &mut x, &mut z, &mut res) }, NfStatus::ModelError);
    unsafe { nf_field_model_free(model) };
}

#[test]
fn field_model_load_errors() {
    let mut model = ptr::null_mut();
    let missing = CString::new("/nonexistent/basis.toml").unwrap();
    let status = unsafe { nf_field_model_load(missing.as_ptr(), 15.0, &mut model) };
    assert_ne!(status, NfStatus::Ok);
    assert!(model.is_null());

    let dir = std::env::temp_dir().join(format!("nf-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "this is = = not toml").unwrap();
    let path = CString::new(bad.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { nf_field_model_load(path.as_ptr(), 15.0, &mut model) }, NfStatus::ParseError);
    std::fs::remove_dir_all(&dir).ok();
}

fn parse(text: &str) -> *mut NfProgram {
    let text = CString::new(text).unwrap();
    let mut program = ptr::null_mut();
    assert_eq!(unsafe { nf_program_parse(text.as_ptr(), &mut program) }, NfStatus::Ok, "{}", last_error());
    program
}

fn exec_model() -> NfExecutionModel {
    NfExecutionModel {
        method: NfMethod::I,
        addressed_rate: khz(12.84),
        spectator_rate: khz(0.32),
        acz_rate_q1: 0.0,
        acz_rate_q2: 0.0,
        global_rate: khz(5.0),
        splitting: 0.0,
        detection_error: 0.0,
    }
}

const FLOPPING: &str = "name flopping\nprepare dd\nconfig B\npulse q2 duration=40us\nconfig A\ndetect\n";

#[test]
fn program_text_round_trip() {
    let program = parse(FLOPPING);
    let mut len = 0;
    assert_eq!(unsafe { nf_program_len(program, &mut len) }, NfStatus::Ok);
    assert_eq!(len, 5);

    let mut needed = 0;
    assert_eq!(unsafe { nf_program_format(program, ptr::null_mut(), 0, &mut needed) }, NfStatus::BufferTooSmall);
    assert!(needed > 1);
    let mut small = vec![0 as std::ffi::c_char; needed - 1];
    let status = unsafe { nf_program_format(program, small.as_mut_ptr(), small.len(), &mut needed) };
    assert_eq!(status, NfStatus::BufferTooSmall);
    let mut buf = vec![0 as std::ffi::c_char; needed];
    assert_eq!(unsafe { nf_program_format(program, buf.as_mut_ptr(), buf.len(), &mut needed) }, NfStatus::Ok);
    let text = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string();
    assert_eq!(text.len() + 1, needed);
    unsafe { nf_program_free(program) };

    let again = parse(&text);
    let mut buf2 = vec![0 as std::ffi::c_char; needed];
    assert_eq!(unsafe { nf_program_format(again, buf2.as_mut_ptr(), buf2.len(), ptr::null_mut()) }, NfStatus::Ok);
    assert_eq!(buf, buf2);
    unsafe { nf_program_free(again) };
    unsafe { nf_program_free(ptr::null_mut()) };
}

#[test]
fn program_parse_error() {
    let text = CString::new("prepare dd\npulse q7 angle=pi\n").unwrap();
    let mut program = ptr::null_mut();
    assert_eq!(unsafe { nf_program_parse(text.as_ptr(), &mut program) }, NfStatus::ParseError);
    assert!(program.is_null());
    assert!(last_error().contains('2'), "{}", last_error());
}

#[test]
fn program_execution() {
    let model = exec_model();
    let program = parse(FLOPPING);
    let (mut p_down, mut bright) = ([0.0; 2], [0.0; 3]);
    let status = unsafe { nf_program_execute(program, &model, p_down.as_mut_ptr(), bright.as_mut_ptr()) };
    assert_eq!(status, NfStatus::Ok, "{}", last_error());
    let t = 40e-6;
    let q1 = (model.spectator_rate * t / 2.0).cos().powi(2);
    let q2 = (model.addressed_rate * t / 2.0).cos().powi(2);
    assert!((p_down[0] - q1).abs() < 1e-9, "{p_down:?}");
    assert!((p_down[1] - q2).abs() < 1e-9, "{p_down:?}");
    assert!((bright.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((bright[2] - q1 * q2).abs() < 1e-9, "{bright:?}");
    assert!((bright[0] - (1.0 - q1) * (1.0 - q2)).abs() < 1e-9, "{bright:?}");
    unsafe { nf_program_free(program) };

    let ramsey = parse("prepare dd\nconfig B\npulse q2 angle=pi/2\nconfig A\nwait 1ms\nconfig B\npulse q2 angle=pi/2\nconfig A\n");
    let quiet = NfExecutionModel { spectator_rate: 0.0, ..model };
    let status = unsafe { nf_program_execute(ramsey, &quiet, p_down.as_mut_ptr(), bright.as_mut_ptr()) };
    assert_eq!(status, NfStatus::Ok, "{}", last_error());
    assert!((p_down[0] - 1.0).abs() < 1e-12 && p_down[1] < 1e-12, "{p_down:?}");
    assert!(bright.iter().all(|b| b.is_nan()));
    unsafe { nf_program_free(ramsey) };

    let targeted_in_a = parse("prepare dd\npulse q2 angle=pi\n");
    let status = unsafe { nf_program_execute(targeted_in_a, &model, p_down.as_mut_ptr(), bright.as_mut_ptr()) };
    assert_eq!(status, NfStatus::ModelError);
    assert!(!last_error().is_empty());
    let status = unsafe { nf_program_execute(targeted_in_a, ptr::null(), p_down.as_mut_ptr(), bright.as_mut_ptr()) };
    assert_eq!(status, NfStatus::NullPointer);
    unsafe { nf_program_free(targeted_in_a) };
}

fn header_compiles(compiler: &str, lang: &str) {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/nearfield.h");
    let Ok(out) = Command::new(compiler).args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, header]).output() else {
        eprintln!("{compiler} not available, skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn header_is_valid_c_and_cpp() {
    header_compiles("cc", "c");
    header_compiles("c++", "c++");
}
