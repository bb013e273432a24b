//! Ground-state hyperfine/Zeeman structure, magnetic-dipole matrix elements
//! and ac Zeeman coefficients.
//!
//! States are expanded in the uncoupled product basis |m_I, m_J⟩ ordered with
//! m_I descending from +I and, inside each m_I, m_J descending from +J. The
//! Hamiltonian
//!
//! ```text
//! H = A I·J + μ_B (g_J J_z + g_I I_z) B₀
//! ```
//!
//! conserves m_F = m_I + m_J, so it is diagonalized block by block. Energies are
//! angular frequencies; the zero-field Hamiltonian is traceless, which puts the
//! energy zero at the centre of gravity of the ground-state manifold.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::AtomParameters;
use crate::units::BOHR_MAGNETON_RAD_PER_S_T;

/// Drive/transition coincidence that makes the perturbative sum invalid, rad/s.
pub const RESONANCE_GUARD: f64 = std::f64::consts::TAU * 1e3;

/// Central-difference step for the field derivative of a transition, tesla.
pub const FIELD_STEP: f64 = 1e-5;

const COUPLING_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HyperfineError {
    #[error("unknown level {0}")]
    UnknownLevel(LevelLabel),
    #[error("levels must differ, got {0} twice")]
    IdenticalLevels(LevelLabel),
    #[error("static field must be non-negative, got {0} T")]
    NegativeField(f64),
    #[error("invalid field range [{lo}, {hi}] T")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("no stationary point of the transition frequency in [{lo}, {hi}] T")]
    NoStationaryPoint { lo: f64, hi: f64 },
    #[error("{count} stationary points of the transition frequency in [{lo}, {hi}] T")]
    MultipleStationaryPoints { count: usize, lo: f64, hi: f64 },
    #[error(
        "drive is within {:.3} kHz of the {from} <-> {to} transition",
        offset.abs() / std::f64::consts::TAU / 1e3
    )]
    ResonantIntermediateState { from: LevelLabel, to: LevelLabel, offset: f64 },
}

/// Low-field quantum numbers (F, m_F), stored doubled so half-integers are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LevelLabel {
    twice_f: i32,
    twice_mf: i32,
}

impl LevelLabel {
    pub fn new(f: f64, m_f: f64) -> Self {
        LevelLabel { twice_f: (2.0 * f).round() as i32, twice_mf: (2.0 * m_f).round() as i32 }
    }

    pub fn f(&self) -> f64 {
        self.twice_f as f64 / 2.0
    }

    pub fn m_f(&self) -> f64 {
        self.twice_mf as f64 / 2.0
    }
}

fn half(twice: i32) -> String {
    if twice % 2 == 0 {
        format!("{}", twice / 2)
    } else {
        format!("{}/2", twice)
    }
}

impl fmt::Display for LevelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{},{}>", half(self.twice_f), half(self.twice_mf))
    }
}

/// The two levels used as a qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QubitPair {
    pub down: LevelLabel,
    pub up: LevelLabel,
}

impl Default for QubitPair {
    /// |F=3, m_F=1⟩ ≡ |↓⟩ and |F=2, m_F=1⟩ ≡ |↑⟩.
    fn default() -> Self {
        QubitPair { down: LevelLabel::new(3.0, 1.0), up: LevelLabel::new(2.0, 1.0) }
    }
}

/// One uncoupled basis state |m_I, m_J⟩ (doubled projections).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProductState {
    pub twice_mi: i32,
    pub twice_mj: i32,
}

impl ProductState {
    fn m_i(&self) -> f64 {
        self.twice_mi as f64 / 2.0
    }
    fn m_j(&self) -> f64 {
        self.twice_mj as f64 / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperfineLevel {
    pub label: LevelLabel,
    /// Angular frequency relative to the manifold centre of gravity.
    pub energy: f64,
    /// Coefficients in the product basis of the owning [`LevelSet`].
    pub amplitudes: Vec<Complex64>,
}

/// All eigenstates of the ground-state Hamiltonian at one static field.
#[derive(Debug, Clone)]
pub struct LevelSet {
    atom: AtomParameters,
    static_field: f64,
    basis: Vec<ProductState>,
    levels: Vec<HyperfineLevel>,
}

/// ⟨a|M_z|b⟩ and ⟨a|M_x|b⟩ with M = g_J J + g_I I (dimensionless).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleElements {
    pub z: Complex64,
    pub x: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcZeemanCoefficients {
    /// rad s⁻¹ T⁻²
    pub c_parallel: f64,
    /// rad s⁻¹ T⁻²
    pub c_perpendicular: f64,
    /// Drive detuning from the transition, rad/s.
    pub detuning: f64,
}

impl AcZeemanCoefficients {
    /// Differential shift ω_acz = c_∥|B_∥|² + c_⊥|B_⊥|² for field amplitudes in tesla.
    pub fn shift(&self, b_parallel: Complex64, b_perpendicular: Complex64) -> f64 {
        self.c_parallel * b_parallel.norm_sqr() + self.c_perpendicular * b_perpendicular.norm_sqr()
    }
}

fn ladder(j: f64, m: f64, up: bool) -> f64 {
    let mm = if up { m * (m + 1.0) } else { m * (m - 1.0) };
    (j * (j + 1.0) - mm).max(0.0).sqrt()
}

/// Product basis ordered m_I descending, then m_J descending.
pub fn product_basis(atom: &AtomParameters) -> Vec<ProductState> {
    let ti = (2.0 * atom.nuclear_spin).round() as i32;
    let tj = (2.0 * atom.electron_spin).round() as i32;
    let mut basis = Vec::with_capacity(atom.dimension());
    let mut mi = ti;
    while mi >= -ti {
        let mut mj = tj;
        while mj >= -tj {
            basis.push(ProductState { twice_mi: mi, twice_mj: mj });
            mj -= 2;
        }
        mi -= 2;
    }
    basis
}

/// Dense Hamiltonian in the product basis (rad/s).
pub fn hamiltonian(atom: &AtomParameters, static_field: f64) -> DMatrix<f64> {
    let basis = product_basis(atom);
    let n = basis.len();
    let (i, j, a) = (atom.nuclear_spin, atom.electron_spin, atom.hyperfine_a);
    let zeeman = BOHR_MAGNETON_RAD_PER_S_T * static_field;
    let mut h = DMatrix::zeros(n, n);
    for (col, s) in basis.iter().enumerate() {
        h[(col, col)] = a * s.m_i() * s.m_j() + zeeman * (atom.g_j * s.m_j() + atom.g_i * s.m_i());
        // (A/2) I+ J- connects |m_I, m_J⟩ to |m_I+1, m_J-1⟩; the hermitian partner fills the transpose.
        let target = ProductState { twice_mi: s.twice_mi + 2, twice_mj: s.twice_mj - 2 };
        if let Some(row) = basis.iter().position(|t| *t == target) {
            let v = 0.5 * a * ladder(i, s.m_i(), true) * ladder(j, s.m_j(), false);
            h[(row, col)] = v;
            h[(col, row)] = v;
        }
    }
    h
}

fn zero_field_energy(atom: &AtomParameters, f: f64) -> f64 {
    let (i, j) = (atom.nuclear_spin, atom.electron_spin);
    0.5 * atom.hyperfine_a * (f * (f + 1.0) - i * (i + 1.0) - j * (j + 1.0))
}

/// Eigenpairs of a small real symmetric block, eigenvalues ascending.
fn block_eigen(block: &DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    let n = block.nrows();
    let mut pairs = match n {
        1 => vec![(block[(0, 0)], vec![1.0])],
        2 => {
            let (a, b, d) = (block[(0, 0)], block[(0, 1)], block[(1, 1)]);
            let mean = 0.5 * (a + d);
            let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            [mean - radius, mean + radius]
                .into_iter()
                .map(|lambda| {
                    let (u, v) = if (lambda - a).abs() >= (lambda - d).abs() {
                        (b, lambda - a)
                    } else {
                        (lambda - d, b)
                    };
                    let norm = u.hypot(v);
                    if norm == 0.0 {
                        // b == 0 and a == d: any orthonormal pair
                        let e = if lambda == mean - radius { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
                        (lambda, e)
                    } else {
                        (lambda, vec![u / norm, v / norm])
                    }
                })
                .collect()
        }
        _ => {
            let eig = SymmetricEigen::new(block.clone());
            (0..n)
                .map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).iter().copied().collect()))
                .collect()
        }
    };
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    // Degenerate 2x2 blocks (b == 0, a == d) would otherwise yield the same vector twice.
    if n == 2 && pairs[0].0 == pairs[1].0 {
        pairs[0].1 = vec![1.0, 0.0];
        pairs[1].1 = vec![0.0, 1.0];
    }
    pairs
}

/// Eigenstates of the ground-state Hamiltonian at static field `static_field` (tesla).
pub fn diagonalize(atom: &AtomParameters, static_field: f64) -> Result<LevelSet, HyperfineError> {
    if !(static_field >= 0.0) {
        return Err(HyperfineError::NegativeField(static_field));
    }
    let basis = product_basis(atom);
    let h = hamiltonian(atom, static_field);
    let n = basis.len();
    let (i, j) = (atom.nuclear_spin, atom.electron_spin);

    let mut mf_values: Vec<i32> = basis.iter().map(|s| s.twice_mi + s.twice_mj).collect();
    mf_values.sort_unstable();
    mf_values.dedup();

    let mut levels = Vec::with_capacity(n);
    for twice_mf in mf_values.into_iter().rev() {
        let idx: Vec<usize> =
            (0..n).filter(|&k| basis[k].twice_mi + basis[k].twice_mj == twice_mf).collect();
        let block = DMatrix::from_fn(idx.len(), idx.len(), |r, c| h[(idx[r], idx[c])]);

        // F values compatible with this m_F, ordered by zero-field energy. Levels
        // of equal m_F never cross, so the ordering persists at any field.
        let mut f_values: Vec<f64> = Vec::new();
        let mut f = (i - j).abs();
        while f <= i + j + 1e-9 {
            if f + 1e-9 >= (twice_mf as f64 / 2.0).abs() {
                f_values.push(f);
            }
            f += 1.0;
        }
        f_values.sort_by(|x, y| zero_field_energy(atom, *x).total_cmp(&zero_field_energy(atom, *y)));
        debug_assert_eq!(f_values.len(), idx.len());

        for ((energy, vector), f) in block_eigen(&block).into_iter().zip(f_values) {
            let mut amplitudes = vec![Complex64::new(0.0, 0.0); n];
            let pivot = vector.iter().copied().fold(0.0_f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            for (k, v) in idx.iter().zip(vector) {
                amplitudes[*k] = Complex64::new(sign * v, 0.0);
            }
            levels.push(HyperfineLevel {
                label: LevelLabel::new(f, twice_mf as f64 / 2.0),
                energy,
                amplitudes,
            });
        }
    }
    levels.sort_by(|x, y| x.energy.total_cmp(&y.energy).then(x.label.cmp(&y.label)));

    Ok(LevelSet { atom: *atom, static_field, basis, levels })
}

impl LevelSet {
    pub fn atom(&self) -> &AtomParameters {
        &self.atom
    }

    pub fn static_field(&self) -> f64 {
        self.static_field
    }

    pub fn basis(&self) -> &[ProductState] {
        &self.basis
    }

    /// Levels sorted by ascending energy.
    pub fn levels(&self) -> &[HyperfineLevel] {
        &self.levels
    }

    pub fn level(&self, label: LevelLabel) -> Result<&HyperfineLevel, HyperfineError> {
        self.levels.iter().find(|l| l.label == label).ok_or(HyperfineError::UnknownLevel(label))
    }

    pub fn energy(&self, label: LevelLabel) -> Result<f64, HyperfineError> {
        self.level(label).map(|l| l.energy)
    }

    fn apply_mz(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.basis
            .iter()
            .zip(v)
            .map(|(s, a)| a * (self.atom.g_j * s.m_j() + self.atom.g_i * s.m_i()))
            .collect()
    }

    fn apply_mplus(&self, v: &[Complex64]) -> Vec<Complex64> {
        let (i, j) = (self.atom.nuclear_spin, self.atom.electron_spin);
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        for (k, s) in self.basis.iter().enumerate() {
            if v[k] == Complex64::new(0.0, 0.0) {
                continue;
            }
            let raise_j = ProductState { twice_mi: s.twice_mi, twice_mj: s.twice_mj + 2 };
            if let Some(t) = self.basis.iter().position(|b| *b == raise_j) {
                out[t] += v[k] * self.atom.g_j * ladder(j, s.m_j(), true);
            }
            let raise_i = ProductState { twice_mi: s.twice_mi + 2, twice_mj: s.twice_mj };
            if let Some(t) = self.basis.iter().position(|b| *b == raise_i) {
                out[t] += v[k] * self.atom.g_i * ladder(i, s.m_i(), true);
            }
        }
        out
    }

    fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    }

    /// Dimensionless dipole-operator elements between two levels.
    pub fn dipole_elements(&self, a: LevelLabel, b: LevelLabel) -> Result<DipoleElements, HyperfineError> {
        let va = &self.level(a)?.amplitudes;
        let vb = &self.level(b)?.amplitudes;
        let z = Self::inner(va, &self.apply_mz(vb));
        let plus_ab = Self::inner(va, &self.apply_mplus(vb));
        let plus_ba = Self::inner(vb, &self.apply_mplus(va));
        // M_x = (M_+ + M_-)/2 and ⟨a|M_-|b⟩ = ⟨b|M_+|a⟩*.
        let x = 0.5 * (plus_ab + plus_ba.conj());
        Ok(DipoleElements { z, x })
    }
}

/// |E_a − E_b| in rad/s.
pub fn transition_frequency(levels: &LevelSet, a: LevelLabel, b: LevelLabel) -> Result<f64, HyperfineError> {
    if a == b {
        return Err(HyperfineError::IdenticalLevels(a));
    }
    Ok((levels.energy(a)? - levels.energy(b)?).abs())
}

/// Rabi rate Ω = |⟨a|μ·B|b⟩|/ħ for a single-tone drive with amplitudes
/// `field_parallel` (along the quantization axis) and `field_perpendicular`
/// (linearly polarized along one transverse axis), tesla.
///
/// On resonance the flip probability is sin²(Ωt/2).
pub fn rabi_rate(
    levels: &LevelSet,
    a: LevelLabel,
    b: LevelLabel,
    field_parallel: Complex64,
    field_perpendicular: Complex64,
) -> Result<f64, HyperfineError> {
    if a == b {
        return Err(HyperfineError::IdenticalLevels(a));
    }
    let d = levels.dipole_elements(a, b)?;
    Ok(BOHR_MAGNETON_RAD_PER_S_T * (d.z * field_parallel + d.x * field_perpendicular).norm())
}

/// Second-order energy shift of a level with energy `energy` under a drive at
/// angular frequency `drive` coupling it to levels `(E_k, |V_k|²)`, where `V_k`
/// is the coupling matrix element for unit field amplitude.
///
/// Both rotating and counter-rotating terms are included:
/// `Σ |V|²/4 · [1/(E − E_k + ω) + 1/(E − E_k − ω)]`.
pub fn second_order_shift(energy: f64, couplings: impl IntoIterator<Item = (f64, f64)>, drive: f64) -> f64 {
    couplings
        .into_iter()
        .map(|(ek, v2)| {
            let d = energy - ek;
            0.25 * v2 * (1.0 / (d + drive) + 1.0 / (d - drive))
        })
        .sum()
}

/// Coefficients of the differential ac Zeeman shift of the a↔b transition
/// for a drive at ω_ab + `detuning`.
///
/// The sign convention is shift(upper level) − shift(lower level), i.e. the
/// change of the transition frequency.
pub fn ac_zeeman_coefficients(
    levels: &LevelSet,
    a: LevelLabel,
    b: LevelLabel,
    detuning: f64,
) -> Result<AcZeemanCoefficients, HyperfineError> {
    let omega_ab = transition_frequency(levels, a, b)?;
    let drive = omega_ab + detuning;
    let (lower, upper) = if levels.energy(a)? <= levels.energy(b)? { (a, b) } else { (b, a) };

    let shifts = |s: LevelLabel| -> Result<(f64, f64), HyperfineError> {
        let es = levels.energy(s)?;
        let mut par = Vec::new();
        let mut perp = Vec::new();
        for k in levels.levels() {
            if k.label == s {
                continue;
            }
            let d = levels.dipole_elements(s, k.label)?;
            let z = BOHR_MAGNETON_RAD_PER_S_T * d.z.norm();
            let x = BOHR_MAGNETON_RAD_PER_S_T * d.x.norm();
            if z < COUPLING_EPS * BOHR_MAGNETON_RAD_PER_S_T && x < COUPLING_EPS * BOHR_MAGNETON_RAD_PER_S_T {
                continue;
            }
            let offset = (k.energy - es).abs() - drive;
            if offset.abs() < RESONANCE_GUARD {
                return Err(HyperfineError::ResonantIntermediateState { from: s, to: k.label, offset });
            }
            par.push((k.energy, z * z));
            perp.push((k.energy, x * x));
        }
        Ok((second_order_shift(es, par, drive), second_order_shift(es, perp, drive)))
    };

    let (par_lo, perp_lo) = shifts(lower)?;
    let (par_hi, perp_hi) = shifts(upper)?;
    Ok(AcZeemanCoefficients { c_parallel: par_hi - par_lo, c_perpendicular: perp_hi - perp_lo, detuning })
}

/// Central-difference field derivative of the a↔b transition frequency, rad s⁻¹ T⁻¹.
pub fn transition_slope(
    atom: &AtomParameters,
    a: LevelLabel,
    b: LevelLabel,
    static_field: f64,
) -> Result<f64, HyperfineError> {
    let f = |field: f64| diagonalize(atom, field).and_then(|l| transition_frequency(&l, a, b));
    Ok((f(static_field + FIELD_STEP)? - f(static_field - FIELD_STEP)?) / (2.0 * FIELD_STEP))
}

/// Field at which the a↔b transition frequency is first-order field independent.
///
/// The derivative is sampled on a grid no coarser than 0.1 mT; exactly one sign
/// change must occur in the range, which is then refined by bisection.
pub fn field_independent_point(
    atom: &AtomParameters,
    a: LevelLabel,
    b: LevelLabel,
    search_range: (f64, f64),
) -> Result<f64, HyperfineError> {
    let (lo, hi) = search_range;
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() || hi <= FIELD_STEP {
        return Err(HyperfineError::InvalidRange { lo, hi });
    }
    let lo = lo.max(FIELD_STEP);
    let intervals = (((hi - lo) / 1e-4).ceil() as usize).clamp(400, 20_000);
    let step = (hi - lo) / intervals as f64;
    let slopes: Vec<(f64, f64)> = (0..=intervals)
        .map(|k| {
            let field = lo + step * k as f64;
            transition_slope(atom, a, b, field).map(|s| (field, s))
        })
        .collect::<Result<_, _>>()?;

    let brackets: Vec<(f64, f64, f64)> = slopes
        .windows(2)
        .filter(|w| w[0].1 == 0.0 || w[0].1.signum() != w[1].1.signum() && w[1].1 != 0.0)
        .map(|w| (w[0].0, w[1].0, w[0].1))
        .collect();
    match brackets.len() {
        0 => {
            if slopes.last().map(|s| s.1) == Some(0.0) {
                return Ok(hi);
            }
            Err(HyperfineError::NoStationaryPoint { lo, hi })
        }
        1 => {
            let (mut left, mut right, mut left_slope) = brackets[0];
            if left_slope == 0.0 {
                return Ok(left);
            }
            while right - left > 1e-10 {
                let mid = 0.5 * (left + right);
                let s = transition_slope(atom, a, b, mid)?;
                if s == 0.0 {
                    return Ok(mid);
                }
                if s.signum() == left_slope.signum() {
                    left = mid;
                    left_slope = s;
                } else {
                    right = mid;
                }
            }
            Ok(0.5 * (left + right))
        }
        count => Err(HyperfineError::MultipleStationaryPoints { count, lo, hi }),
    }
}
