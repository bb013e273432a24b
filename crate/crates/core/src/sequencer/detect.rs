//! Two-ion fluorescence detection and the conditional readout protocol.
//!
//! | state | stage 1 | stage 2 (after π on qubit 2) |
//! |-------|---------|------------------------------|
//! | ↓↓    | 2       | –                            |
//! | ↓↑    | 1       | 2                            |
//! | ↑↓    | 1       | 0                            |
//! | ↑↑    | 0       | –                            |

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::spindynamics::{QubitState, Spin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Inferred {
    Resolved([Spin; 2]),
    /// One bright ion at stage 1; the second stage decides.
    Pending,
    /// A stage-2 count that no basis state produces (readout error).
    Inconsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub stage: u8,
    pub bright_count: u8,
    pub inferred: Inferred,
}

/// Record for a detection with `bright_count` bright ions, given the record
/// of the previous detection.
pub fn infer(previous: Option<&DetectionRecord>, bright_count: u8) -> DetectionRecord {
    use Spin::{Down, Up};
    let second = matches!(previous, Some(DetectionRecord { stage: 1, inferred: Inferred::Pending, .. }));
    let inferred = match (second, bright_count) {
        (false, 2) => Inferred::Resolved([Down, Down]),
        (false, 0) => Inferred::Resolved([Up, Up]),
        (false, _) => Inferred::Pending,
        (true, 2) => Inferred::Resolved([Down, Up]),
        (true, 0) => Inferred::Resolved([Up, Down]),
        (true, _) => Inferred::Inconsistent,
    };
    DetectionRecord { stage: if second { 2 } else { 1 }, bright_count, inferred }
}

/// Ideal projective outcome per ion and the observed bright count, each ion
/// misread with probability `error`. Zero-weight branches are dropped.
pub(crate) fn detection_branches(state: &[QubitState; 2], error: f64) -> Vec<(f64, [Spin; 2], u8)> {
    let mut out: Vec<(f64, [Spin; 2], u8)> = Vec::with_capacity(8);
    for s1 in [Spin::Down, Spin::Up] {
        for s2 in [Spin::Down, Spin::Up] {
            let p = prob(&state[0], s1) * prob(&state[1], s2);
            if p == 0.0 {
                continue;
            }
            for f1 in [false, true] {
                for f2 in [false, true] {
                    let pf = flip_weight(error, f1) * flip_weight(error, f2);
                    if pf == 0.0 {
                        continue;
                    }
                    let count = bright(s1, f1) + bright(s2, f2);
                    match out.iter_mut().find(|(_, s, c)| *s == [s1, s2] && *c == count) {
                        Some(entry) => entry.0 += p * pf,
                        None => out.push((p * pf, [s1, s2], count)),
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn sample_detection(state: &[QubitState; 2], error: f64, rng: &mut ChaCha8Rng) -> ([Spin; 2], u8) {
    let mut spins = [Spin::Down; 2];
    let mut count = 0;
    for k in 0..2 {
        let s = if rng.random::<f64>() < state[k].p_down() { Spin::Down } else { Spin::Up };
        let flip = error > 0.0 && rng.random::<f64>() < error;
        spins[k] = s;
        count += bright(s, flip);
    }
    (spins, count)
}

fn prob(q: &QubitState, s: Spin) -> f64 {
    let n = q.norm_sqr();
    match s {
        Spin::Down => q.p_down() / n,
        Spin::Up => q.p_up() / n,
    }
}

fn flip_weight(error: f64, flipped: bool) -> f64 {
    if flipped {
        error
    } else {
        1.0 - error
    }
}

fn bright(s: Spin, flipped: bool) -> u8 {
    ((s == Spin::Down) != flipped) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionMode {
    Deterministic,
    Sampled(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub probability: f64,
    pub records: Vec<DetectionRecord>,
}

/// Runs the two-stage readout on a product state. Deterministic mode lists
/// every outcome with its probability; sampled mode returns one outcome of
/// probability 1.
pub fn conditional_detection(state: [QubitState; 2], mode: DetectionMode, error: f64) -> Vec<DetectionOutcome> {
    match mode {
        DetectionMode::Deterministic => {
            let mut out: Vec<DetectionOutcome> = Vec::new();
            let mut push = |p: f64, records: Vec<DetectionRecord>| {
                match out.iter_mut().find(|o| o.records == records) {
                    Some(o) => o.probability += p,
                    None => out.push(DetectionOutcome { probability: p, records }),
                }
            };
            for (p1, spins, count) in detection_branches(&state, error) {
                let first = infer(None, count);
                if first.inferred != Inferred::Pending {
                    push(p1, vec![first]);
                    continue;
                }
                let after = [QubitState::basis(spins[0]), QubitState::basis(spins[1].flipped())];
                for (p2, _, count2) in detection_branches(&after, error) {
                    push(p1 * p2, vec![first, infer(Some(&first), count2)]);
                }
            }
            out
        }
        DetectionMode::Sampled(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            vec![DetectionOutcome { probability: 1.0, records: sample_protocol(state, error, &mut rng) }]
        }
    }
}

pub(crate) fn sample_protocol(state: [QubitState; 2], error: f64, rng: &mut ChaCha8Rng) -> Vec<DetectionRecord> {
    let (spins, count) = sample_detection(&state, error, rng);
    let first = infer(None, count);
    if first.inferred != Inferred::Pending {
        return vec![first];
    }
    let after = [QubitState::basis(spins[0]), QubitState::basis(spins[1].flipped())];
    let (_, count2) = sample_detection(&after, error, rng);
    vec![first, infer(Some(&first), count2)]
}
