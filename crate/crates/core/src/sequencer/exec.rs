//! Program execution over a weighted mixture of product-state trajectories.
//!
//! Deterministic mode branches on every probabilistic event (preparation
//! error, detection) and keeps exact weights. Sampling mode follows a single
//! trajectory drawn from a seeded generator.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::detect::{detection_branches, infer, sample_detection, DetectionRecord};
use super::{flat_count, Configuration, Instruction, Pulse, PulseLength, SequenceError, SequenceProgram, Target};
use crate::addressing::{Method, MethodReport};
use crate::spindynamics::{evolve, PulseParams, QubitState, Spin};
use crate::trapmodel::DEFAULT_SWITCH_TIME;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error(transparent)]
    Program(#[from] SequenceError),
    #[error("invalid execution model: {0}")]
    InvalidModel(String),
    #[error("instruction {index} ({keyword}): {message}")]
    Step { index: usize, keyword: &'static str, message: String },
}

/// How pulses resolve to per-ion (Ω, Δ, φ, t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutionModel {
    pub method: Method,
    /// Methods I/II: Rabi rate on the addressed ion, rad/s.
    pub addressed_rate: f64,
    /// Methods I/II: Rabi rate on the other ion, rad/s.
    pub spectator_rate: f64,
    /// Method III: σ_z rates of ion 1 and ion 2, rad/s.
    pub acz_rates: [f64; 2],
    /// Rate of global pulses, and of addressed pulses under method IV.
    pub global_rate: f64,
    /// Method IV: resonance of ion 2 minus that of ion 1, rad/s.
    pub splitting: f64,
    pub switch_time: f64,
    /// Drive phase added at every configuration switch.
    pub phase_slip: f64,
    /// Per-ion probability of misreading bright/dark.
    pub detection_error: f64,
    /// Per-ion probability of preparing the opposite state.
    pub preparation_error: f64,
}

impl ExecutionModel {
    /// Model addressing qubit 2 with the rates of `report`.
    pub fn from_report(report: &MethodReport, global_rate: f64) -> Self {
        let mut m = ExecutionModel {
            method: report.method,
            addressed_rate: report.rate_q2,
            spectator_rate: report.rate_q1,
            acz_rates: [0.0; 2],
            global_rate,
            splitting: report.differential_acz.unwrap_or(0.0),
            switch_time: DEFAULT_SWITCH_TIME,
            phase_slip: 0.0,
            detection_error: 0.0,
            preparation_error: 0.0,
        };
        match report.method {
            Method::III => m.acz_rates = [report.rate_q1, report.rate_q2],
            Method::IV => m.global_rate = report.rate_q1,
            Method::I | Method::II => {}
        }
        m
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        let bad = |m: &str| Err(ExecError::InvalidModel(m.into()));
        let finite = [
            self.addressed_rate,
            self.spectator_rate,
            self.acz_rates[0],
            self.acz_rates[1],
            self.global_rate,
            self.splitting,
            self.switch_time,
            self.phase_slip,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all rates and times must be finite");
        }
        if self.addressed_rate < 0.0 || self.spectator_rate < 0.0 || self.global_rate < 0.0 {
            return bad("Rabi rates must be non-negative");
        }
        if self.switch_time < 0.0 {
            return bad("switch time must be non-negative");
        }
        for (what, p) in [("detection error", self.detection_error), ("preparation error", self.preparation_error)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ExecError::InvalidModel(format!("{what} {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn resolve(&self, p: &Pulse, config: Configuration, phase_offset: f64) -> Result<Resolved, String> {
        let detuning = p.detuning.map_or(0.0, |d| d.si());
        let phase = p.phase.map_or(0.0, |a| a.radians()) + phase_offset;
        let timed = |rate: f64, phase: f64| -> Result<(f64, f64), String> {
            match p.length {
                PulseLength::Duration(q) => Ok((q.si(), phase)),
                PulseLength::Angle(a) => {
                    if !(rate > 0.0) {
                        return Err("angle pulse needs a positive Rabi rate".into());
                    }
                    let theta = a.radians();
                    Ok((theta.abs() / rate, if theta < 0.0 { phase + PI } else { phase }))
                }
            }
        };
        let index = match p.target {
            Target::Global => {
                let rate = p.rate.map_or(self.global_rate, |r| r.si());
                let (t, phase) = timed(rate, phase)?;
                let pp = PulseParams::new(rate, phase, detuning, t);
                return Ok(Resolved { params: [pp, pp], frame: Some([detuning; 2]) });
            }
            Target::Q1 => 0,
            Target::Q2 => 1,
        };
        match self.method {
            Method::I | Method::II => {
                if config != Configuration::B {
                    return Err(format!(
                        "addressed pulse on {} needs configuration B under method {}",
                        p.target.name(),
                        self.method
                    ));
                }
                let scale = match p.rate {
                    Some(r) if self.addressed_rate > 0.0 => r.si() / self.addressed_rate,
                    Some(_) => return Err("cannot rescale a zero addressed rate".into()),
                    None => 1.0,
                };
                let mut rates = [self.spectator_rate * scale; 2];
                rates[index] = self.addressed_rate * scale;
                let (t, phase) = timed(rates[index], phase)?;
                Ok(Resolved {
                    params: rates.map(|r| PulseParams::new(r, phase, detuning, t)),
                    frame: Some([detuning; 2]),
                })
            }
            Method::III => {
                let own = self.acz_rates[index].abs();
                let scale = match p.rate {
                    Some(r) if own > 0.0 => r.si() / own,
                    Some(_) => return Err("cannot rescale a zero σ_z rate".into()),
                    None => 1.0,
                };
                let (t, _) = timed(own * scale, 0.0)?;
                Ok(Resolved { params: self.acz_rates.map(|w| PulseParams::free(w * scale, t)), frame: None })
            }
            Method::IV => {
                let rate = p.rate.map_or(self.global_rate, |r| r.si());
                let (t, phase) = timed(rate, phase)?;
                let drive = if index == 1 { detuning + self.splitting } else { detuning };
                Ok(Resolved {
                    params: [
                        PulseParams::new(rate, phase, drive, t),
                        PulseParams::new(rate, phase, drive - self.splitting, t),
                    ],
                    frame: Some([drive; 2]),
                })
            }
        }
    }
}

struct Resolved {
    params: [PulseParams; 2],
    /// Detuning of the drive frame after the pulse; `None` leaves it unchanged.
    frame: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Deterministic,
    Sampling(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceStep {
    /// 0 is the initial state, then one step per top-level instruction.
    pub step: usize,
    pub instruction: &'static str,
    /// Weighted mean over trajectories, seconds.
    pub time: f64,
    pub p_down: [f64; 2],
    /// Largest |‖ψ‖² − 1| over trajectories and qubits.
    pub norm_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub probability: f64,
    pub records: Vec<DetectionRecord>,
}

impl Outcome {
    pub fn readings(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.bright_count).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecutionTrace {
    pub steps: Vec<TraceStep>,
    /// Distinct detection histories with their probabilities.
    pub outcomes: Vec<Outcome>,
    pub final_p_down: [f64; 2],
    /// Weighted mean of the final sequence time, seconds.
    pub duration: f64,
}

impl ExecutionTrace {
    /// Distribution of the bright count at the `k`-th detection of a history
    /// (0-based); histories with fewer detections do not contribute.
    pub fn bright_distribution(&self, k: usize) -> [f64; 3] {
        let mut d = [0.0; 3];
        for o in &self.outcomes {
            if let Some(r) = o.records.get(k) {
                d[r.bright_count as usize] += o.probability;
            }
        }
        d
    }

    /// Expected number of bright ions at the end, with ideal readout.
    pub fn bright_expectation(&self) -> f64 {
        self.final_p_down[0] + self.final_p_down[1]
    }
}

#[derive(Debug, Clone)]
struct Trajectory {
    weight: f64,
    state: [QubitState; 2],
    frame: [f64; 2],
    config: Configuration,
    phase_offset: f64,
    time: f64,
    records: Vec<DetectionRecord>,
}

impl Trajectory {
    fn initial() -> Self {
        Trajectory {
            weight: 1.0,
            state: [QubitState::down(); 2],
            frame: [0.0; 2],
            config: Configuration::A,
            phase_offset: 0.0,
            time: 0.0,
            records: Vec::new(),
        }
    }
}

struct Runner<'a> {
    model: &'a ExecutionModel,
    rng: Option<ChaCha8Rng>,
    counter: usize,
}

impl Runner<'_> {
    fn block(&mut self, body: &[Instruction], mut trajs: Vec<Trajectory>, steps: Option<&mut Vec<TraceStep>>) -> Result<Vec<Trajectory>, ExecError> {
        let mut steps = steps;
        for (k, ins) in body.iter().enumerate() {
            self.counter += 1;
            let index = self.counter;
            let fail = |message: String| ExecError::Step { index, keyword: ins.keyword(), message };
            trajs = match ins {
                Instruction::Prepare(spins) => self.prepare(trajs, *spins),
                Instruction::SetConfig(c) => {
                    for t in &mut trajs {
                        t.config = *c;
                        t.time += self.model.switch_time;
                        t.phase_offset += self.model.phase_slip;
                    }
                    trajs
                }
                Instruction::Pulse(p) => {
                    for t in &mut trajs {
                        let r = self.model.resolve(p, t.config, t.phase_offset).map_err(fail)?;
                        for i in 0..2 {
                            t.state[i] = evolve(t.state[i], &r.params[i]);
                        }
                        if let Some(f) = r.frame {
                            t.frame = f;
                        }
                        t.time += r.params[0].duration;
                    }
                    trajs
                }
                Instruction::Wait(q) => {
                    let dt = q.si();
                    for t in &mut trajs {
                        for i in 0..2 {
                            t.state[i] = evolve(t.state[i], &PulseParams::free(t.frame[i], dt));
                        }
                        t.time += dt;
                    }
                    trajs
                }
                Instruction::Detect => self.detect(trajs),
                Instruction::Branch { bright, body } => {
                    let (taken, rest): (Vec<_>, Vec<_>) = trajs
                        .into_iter()
                        .partition(|t| t.records.last().is_some_and(|r| r.bright_count == *bright));
                    let mut out = rest;
                    if taken.is_empty() {
                        self.counter += flat_count(body);
                    } else {
                        out.extend(self.block(body, taken, None)?);
                    }
                    out
                }
            };
            if let Some(s) = steps.as_deref_mut() {
                s.push(summarize(k + 1, ins.keyword(), &trajs));
            }
        }
        Ok(trajs)
    }

    fn prepare(&mut self, trajs: Vec<Trajectory>, spins: [Spin; 2]) -> Vec<Trajectory> {
        let e = self.model.preparation_error;
        let mut out = Vec::with_capacity(trajs.len());
        for t in trajs {
            match self.rng.as_mut() {
                Some(rng) => {
                    let mut s = spins;
                    for spin in &mut s {
                        if e > 0.0 && rng.random::<f64>() < e {
                            *spin = spin.flipped();
                        }
                    }
                    out.push(Trajectory { state: s.map(QubitState::basis), frame: [0.0; 2], ..t });
                }
                None => {
                    for f1 in [false, true] {
                        for f2 in [false, true] {
                            let w = t.weight * weight(e, f1) * weight(e, f2);
                            if w == 0.0 {
                                continue;
                            }
                            let s = [flip_if(spins[0], f1), flip_if(spins[1], f2)];
                            out.push(Trajectory {
                                weight: w,
                                state: s.map(QubitState::basis),
                                frame: [0.0; 2],
                                records: t.records.clone(),
                                ..t
                            });
                        }
                    }
                }
            }
        }
        out
    }

    fn detect(&mut self, trajs: Vec<Trajectory>) -> Vec<Trajectory> {
        let e = self.model.detection_error;
        let mut out = Vec::with_capacity(trajs.len());
        for t in trajs {
            match self.rng.as_mut() {
                Some(rng) => {
                    let (s, count) = sample_detection(&t.state, e, rng);
                    let mut records = t.records.clone();
                    records.push(infer(t.records.last(), count));
                    out.push(Trajectory { state: s.map(QubitState::basis), records, ..t });
                }
                None => {
                    for (p, s, count) in detection_branches(&t.state, e) {
                        let mut records = t.records.clone();
                        records.push(infer(t.records.last(), count));
                        out.push(Trajectory { weight: t.weight * p, state: s.map(QubitState::basis), records, ..t.clone() });
                    }
                }
            }
        }
        out
    }
}

fn weight(e: f64, flipped: bool) -> f64 {
    if flipped {
        e
    } else {
        1.0 - e
    }
}

fn flip_if(s: Spin, f: bool) -> Spin {
    if f {
        s.flipped()
    } else {
        s
    }
}

fn summarize(step: usize, instruction: &'static str, trajs: &[Trajectory]) -> TraceStep {
    let total: f64 = trajs.iter().map(|t| t.weight).sum();
    let mut p = [0.0; 2];
    let mut time = 0.0;
    let mut norm_deviation: f64 = 0.0;
    for t in trajs {
        let w = t.weight / total;
        p[0] += w * t.state[0].p_down();
        p[1] += w * t.state[1].p_down();
        time += w * t.time;
        for q in &t.state {
            norm_deviation = norm_deviation.max((q.norm_sqr() - 1.0).abs());
        }
    }
    TraceStep { step, instruction, time, p_down: p, norm_deviation }
}

fn run(program: &SequenceProgram, model: &ExecutionModel, rng: Option<ChaCha8Rng>) -> Result<(Vec<TraceStep>, Vec<Trajectory>), ExecError> {
    let mut runner = Runner { model, rng, counter: 0 };
    let start = vec![Trajectory::initial()];
    let mut steps = vec![summarize(0, "start", &start)];
    let end = runner.block(&program.instructions, start, Some(&mut steps))?;
    Ok((steps, end))
}

/// Runs a validated program. Errors carry the 1-based index of the failing
/// instruction counted depth-first.
pub fn execute(program: &SequenceProgram, model: &ExecutionModel, mode: ExecMode) -> Result<ExecutionTrace, ExecError> {
    program.validate()?;
    model.validate()?;
    let rng = match mode {
        ExecMode::Deterministic => None,
        ExecMode::Sampling(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
    };
    let (steps, end) = run(program, model, rng)?;
    let mut outcomes: Vec<Outcome> = Vec::new();
    for t in &end {
        match outcomes.iter_mut().find(|o| o.records == t.records) {
            Some(o) => o.probability += t.weight,
            None => outcomes.push(Outcome { probability: t.weight, records: t.records.clone() }),
        }
    }
    let last = *steps.last().expect("initial step is always present");
    Ok(ExecutionTrace { final_p_down: last.p_down, duration: last.time, steps, outcomes })
}

/// Counts of detection histories (bright counts in order) over repeated
/// sampled runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotHistogram {
    pub shots: usize,
    pub seed: u64,
    pub counts: BTreeMap<Vec<u8>, usize>,
}

impl ShotHistogram {
    pub fn frequency(&self, readings: &[u8]) -> f64 {
        self.counts.get(readings).copied().unwrap_or(0) as f64 / self.shots as f64
    }
}

/// Shot `k` uses stream `k` of a generator seeded with `seed`, so the result
/// does not depend on scheduling.
pub fn execute_shots(program: &SequenceProgram, model: &ExecutionModel, shots: usize, seed: u64) -> Result<ShotHistogram, ExecError> {
    program.validate()?;
    model.validate()?;
    let per_shot: Result<Vec<Vec<u8>>, ExecError> = (0..shots as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let (_, end) = run(program, model, Some(rng))?;
            Ok(end[0].records.iter().map(|r| r.bright_count).collect())
        })
        .collect();
    let mut counts = BTreeMap::new();
    for r in per_shot? {
        *counts.entry(r).or_insert(0) += 1;
    }
    Ok(ShotHistogram { shots, seed, counts })
}
