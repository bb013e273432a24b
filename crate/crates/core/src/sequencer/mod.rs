//! A line-oriented pulse-sequence language.
//!
//! ```text
//! # Ramsey on qubit 2
//! name ramsey
//! prepare dd
//! config B
//! pulse q2 angle=pi/2
//! config A
//! wait 13ms
//! config B
//! pulse q2 angle=pi/2
//! config A
//! detect
//! branch bright=1 {
//!     pulse q2 angle=pi
//!     detect
//! }
//! ```
//!
//! Pulse arguments are `key=value` pairs: `duration`, `angle`, `rate`,
//! `detuning`, `phase`. Exactly one of `duration` and `angle` is required.

mod detect;
mod exec;
mod parse;

use std::fmt::{self, Write as _};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spindynamics::Spin;

pub use detect::{conditional_detection, infer, DetectionMode, DetectionOutcome, DetectionRecord, Inferred};
pub use exec::{
    execute, execute_shots, ExecError, ExecMode, ExecutionModel, ExecutionTrace, Outcome, ShotHistogram, TraceStep,
};
pub use parse::{parse, parse_angle, parse_quantity};

/// First line of every formatted program.
pub const FORMAT_HEADER: &str = "# nearfield pulse sequence";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SequenceError {
    #[error("{line}:{column}: syntax error: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{line}:{column}: validation error: {message}")]
    Validation { line: usize, column: usize, message: String },
}

impl SequenceError {
    pub fn position(&self) -> (usize, usize) {
        match self {
            SequenceError::Syntax { line, column, .. } | SequenceError::Validation { line, column, .. } => {
                (*line, *column)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    S,
    Ms,
    Us,
    Ns,
    Hz,
    KHz,
    MHz,
    Rad,
    Deg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    Time,
    Frequency,
    Angle,
}

impl Unit {
    pub const ALL: [Unit; 9] = [Unit::S, Unit::Ms, Unit::Us, Unit::Ns, Unit::Hz, Unit::KHz, Unit::MHz, Unit::Rad, Unit::Deg];

    pub fn symbol(self) -> &'static str {
        match self {
            Unit::S => "s",
            Unit::Ms => "ms",
            Unit::Us => "us",
            Unit::Ns => "ns",
            Unit::Hz => "Hz",
            Unit::KHz => "kHz",
            Unit::MHz => "MHz",
            Unit::Rad => "rad",
            Unit::Deg => "deg",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Unit> {
        match s {
            "µs" | "μs" => Some(Unit::Us),
            _ => Unit::ALL.into_iter().find(|u| u.symbol() == s),
        }
    }

    pub fn kind(self) -> UnitKind {
        match self {
            Unit::S | Unit::Ms | Unit::Us | Unit::Ns => UnitKind::Time,
            Unit::Hz | Unit::KHz | Unit::MHz => UnitKind::Frequency,
            Unit::Rad | Unit::Deg => UnitKind::Angle,
        }
    }

    /// Factor to SI: seconds, rad/s (frequencies are ordinary Hz in the
    /// script) or radians.
    fn factor(self) -> f64 {
        match self {
            Unit::S => 1.0,
            Unit::Ms => 1e-3,
            Unit::Us => 1e-6,
            Unit::Ns => 1e-9,
            Unit::Hz => std::f64::consts::TAU,
            Unit::KHz => std::f64::consts::TAU * 1e3,
            Unit::MHz => std::f64::consts::TAU * 1e6,
            Unit::Rad => 1.0,
            Unit::Deg => PI / 180.0,
        }
    }
}

/// A number with the unit it was written in, kept for exact round-trips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub unit: Unit,
}

impl Quantity {
    pub fn new(value: f64, unit: Unit) -> Self {
        Quantity { value, unit }
    }

    /// Seconds, rad/s or radians.
    pub fn si(&self) -> f64 {
        self.value * self.unit.factor()
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.value, self.unit.symbol())
    }
}

/// Rotation angle or phase, either as a multiple of π or an explicit quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Angle {
    Pi(f64),
    Quantity(Quantity),
}

impl Angle {
    pub fn radians(&self) -> f64 {
        match self {
            Angle::Pi(m) => m * PI,
            Angle::Quantity(q) => q.si(),
        }
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Angle::Pi(m) if *m == 1.0 => f.write_str("pi"),
            Angle::Pi(m) if *m == -1.0 => f.write_str("-pi"),
            Angle::Pi(m) => write!(f, "{m}pi"),
            Angle::Quantity(q) => q.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    Global,
    Q1,
    Q2,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Global => "global",
            Target::Q1 => "q1",
            Target::Q2 => "q2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Configuration {
    A,
    B,
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Configuration::A => "A",
            Configuration::B => "B",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PulseLength {
    Duration(Quantity),
    Angle(Angle),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub target: Target,
    pub length: PulseLength,
    /// Overrides the method's Rabi rate (ordinary frequency units).
    pub rate: Option<Quantity>,
    pub detuning: Option<Quantity>,
    pub phase: Option<Angle>,
}

impl Pulse {
    pub fn angle(target: Target, angle: Angle) -> Self {
        Pulse { target, length: PulseLength::Angle(angle), rate: None, detuning: None, phase: None }
    }

    pub fn duration(target: Target, duration: Quantity) -> Self {
        Pulse { target, length: PulseLength::Duration(duration), rate: None, detuning: None, phase: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Instruction {
    /// Product basis state, qubit 1 first.
    Prepare([Spin; 2]),
    SetConfig(Configuration),
    Pulse(Pulse),
    Wait(Quantity),
    Detect,
    Branch { bright: u8, body: Vec<Instruction> },
}

impl Instruction {
    pub fn keyword(&self) -> &'static str {
        match self {
            Instruction::Prepare(_) => "prepare",
            Instruction::SetConfig(_) => "config",
            Instruction::Pulse(_) => "pulse",
            Instruction::Wait(_) => "wait",
            Instruction::Detect => "detect",
            Instruction::Branch { .. } => "branch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SequenceProgram {
    pub name: Option<String>,
    pub seed: Option<u64>,
    pub instructions: Vec<Instruction>,
}

impl SequenceProgram {
    /// Checks the program invariants; errors carry line 0 since a built
    /// program has no source positions.
    pub fn validate(&self) -> Result<(), SequenceError> {
        let mut v = Validator::default();
        fn walk(v: &mut Validator, body: &[Instruction]) -> Result<(), String> {
            for ins in body {
                v.check(ins)?;
                if let Instruction::Branch { body, .. } = ins {
                    let saved = v.enter_branch();
                    walk(v, body)?;
                    v.exit_branch(saved)?;
                }
            }
            Ok(())
        }
        if let Some(name) = &self.name {
            if !valid_name(name) {
                return Err(SequenceError::Validation { line: 0, column: 0, message: format!("invalid name `{name}`") });
            }
        }
        walk(&mut v, &self.instructions).map_err(|message| SequenceError::Validation { line: 0, column: 0, message })
    }

    /// Number of instructions including those nested in branches.
    pub fn flat_len(&self) -> usize {
        flat_count(&self.instructions)
    }
}

pub(crate) fn flat_count(body: &[Instruction]) -> usize {
    body.iter()
        .map(|i| match i {
            Instruction::Branch { body, .. } => 1 + flat_count(body),
            _ => 1,
        })
        .sum()
}

pub(crate) fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

/// Tracks configuration, preparation and detection state while walking a
/// program in order.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Validator {
    config: Configuration,
    prepared: bool,
    detected: bool,
}

impl Default for Validator {
    fn default() -> Self {
        Validator { config: Configuration::A, prepared: false, detected: false }
    }
}

impl Validator {
    pub(crate) fn check(&mut self, ins: &Instruction) -> Result<(), String> {
        match ins {
            Instruction::Prepare(_) => self.prepared = true,
            Instruction::SetConfig(c) => {
                if *c == self.config {
                    return Err(format!("already in configuration {c}"));
                }
                self.config = *c;
            }
            Instruction::Pulse(p) => check_pulse(p)?,
            Instruction::Wait(q) => {
                check_kind(q, UnitKind::Time, "wait")?;
                if !(q.value >= 0.0) {
                    return Err(format!("negative wait {q}"));
                }
            }
            Instruction::Detect => {
                if !self.prepared {
                    return Err("detect before prepare".into());
                }
                self.detected = true;
            }
            Instruction::Branch { bright, .. } => {
                if *bright > 2 {
                    return Err(format!("bright count {bright} out of range 0..=2"));
                }
                if !self.detected {
                    return Err("branch without a preceding detect".into());
                }
            }
        }
        Ok(())
    }

    pub(crate) fn enter_branch(&self) -> Validator {
        *self
    }

    /// The body may or may not run, so the state after a branch is the state
    /// before it; the body must restore the configuration.
    pub(crate) fn exit_branch(&mut self, saved: Validator) -> Result<(), String> {
        if self.config != saved.config {
            return Err(format!(
                "branch body ends in configuration {} but was entered in {}",
                self.config, saved.config
            ));
        }
        *self = saved;
        Ok(())
    }
}

fn check_kind(q: &Quantity, kind: UnitKind, what: &str) -> Result<(), String> {
    if q.unit.kind() != kind {
        let expected = match kind {
            UnitKind::Time => "a time unit (s, ms, us, ns)",
            UnitKind::Frequency => "a frequency unit (Hz, kHz, MHz)",
            UnitKind::Angle => "an angle unit (rad, deg)",
        };
        return Err(format!("{what} needs {expected}, got `{}`", q.unit.symbol()));
    }
    if !q.value.is_finite() {
        return Err(format!("{what} must be finite"));
    }
    Ok(())
}

fn check_angle(a: &Angle, what: &str) -> Result<(), String> {
    match a {
        Angle::Pi(m) if !m.is_finite() => Err(format!("{what} must be finite")),
        Angle::Pi(_) => Ok(()),
        Angle::Quantity(q) => check_kind(q, UnitKind::Angle, what),
    }
}

fn check_pulse(p: &Pulse) -> Result<(), String> {
    match &p.length {
        PulseLength::Duration(q) => {
            check_kind(q, UnitKind::Time, "duration")?;
            if !(q.value >= 0.0) {
                return Err(format!("negative duration {q}"));
            }
        }
        PulseLength::Angle(a) => check_angle(a, "angle")?,
    }
    if let Some(r) = &p.rate {
        check_kind(r, UnitKind::Frequency, "rate")?;
        if !(r.value > 0.0) {
            return Err(format!("rate must be positive, got {r}"));
        }
    }
    if let Some(d) = &p.detuning {
        check_kind(d, UnitKind::Frequency, "detuning")?;
    }
    if let Some(a) = &p.phase {
        check_angle(a, "phase")?;
    }
    Ok(())
}

fn spin_char(s: Spin) -> char {
    match s {
        Spin::Down => 'd',
        Spin::Up => 'u',
    }
}

fn format_block(out: &mut String, body: &[Instruction], depth: usize) {
    let indent = "    ".repeat(depth);
    for ins in body {
        out.push_str(&indent);
        match ins {
            Instruction::Prepare([a, b]) => {
                let _ = write!(out, "prepare {}{}", spin_char(*a), spin_char(*b));
            }
            Instruction::SetConfig(c) => {
                let _ = write!(out, "config {c}");
            }
            Instruction::Pulse(p) => {
                let _ = write!(out, "pulse {}", p.target.name());
                match &p.length {
                    PulseLength::Duration(q) => {
                        let _ = write!(out, " duration={q}");
                    }
                    PulseLength::Angle(a) => {
                        let _ = write!(out, " angle={a}");
                    }
                }
                if let Some(r) = &p.rate {
                    let _ = write!(out, " rate={r}");
                }
                if let Some(d) = &p.detuning {
                    let _ = write!(out, " detuning={d}");
                }
                if let Some(a) = &p.phase {
                    let _ = write!(out, " phase={a}");
                }
            }
            Instruction::Wait(q) => {
                let _ = write!(out, "wait {q}");
            }
            Instruction::Detect => out.push_str("detect"),
            Instruction::Branch { bright, body } => {
                let _ = writeln!(out, "branch bright={bright} {{");
                format_block(out, body, depth + 1);
                out.push_str(&indent);
                out.push('}');
            }
        }
        out.push('\n');
    }
}

/// Canonical text of a program.
pub fn format(program: &SequenceProgram) -> String {
    let mut out = String::new();
    out.push_str(FORMAT_HEADER);
    out.push('\n');
    if let Some(name) = &program.name {
        let _ = writeln!(out, "name {name}");
    }
    if let Some(seed) = program.seed {
        let _ = writeln!(out, "seed {seed}");
    }
    format_block(&mut out, &program.instructions, 0);
    out
}
