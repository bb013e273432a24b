//! Microwave near-field model around the trap centre.
//!
//! Each electrode contributes, per ampere of current, a uniform term plus a
//! linear (quadrupole) term in the x-z plane:
//!
//! ```text
//! B(r) = Σ_k I_k (u_k + G_k r),   r = (x, z)
//! ```
//!
//! The field does not depend on y. `G_k` is the Jacobian ∂B_i/∂r_j and must be
//! symmetric and traceless for a source-free quasi-static 2-D field.

use std::fmt;
use std::path::Path;

use nalgebra::{Matrix2, Matrix4x2, Vector2, Vector3, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hyperfine::{rabi_rate, HyperfineError, LevelSet, QubitPair};
use crate::units::UM;

/// Radius within which the quadrupole expansion is trusted, metres.
pub const DEFAULT_VALIDITY_RADIUS: f64 = 3.0 * UM;

/// Minimum |B|² (T²) above which a null is flagged as imperfect.
pub const IMPERFECT_NULL_THRESHOLD: f64 = 1e-15;

/// Smallest acceptable singular-value ratio of the combined quadrupole matrix.
pub const NULL_CONDITIONING_LIMIT: f64 = 1e-14;

/// Built-in copy of `data/basis_fixture.toml`.
pub const BASIS_FIXTURE_TOML: &str = include_str!("../data/basis_fixture.toml");

const MAXWELL_TOLERANCE: f64 = 1e-12;

type C = Complex64;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("combined quadrupole matrix is singular (singular-value ratio {ratio:.3e})")]
    SingularGradient { ratio: f64 },
    #[error("basis for {electrode} violates Maxwell constraints: {reason}")]
    MaxwellViolation { electrode: Electrode, reason: String },
    #[error("basis fixture must define each of MW1, MW2, MW3 exactly once")]
    IncompleteBasis,
    #[error("cannot read basis fixture {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse basis fixture: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Hyperfine(#[from] HyperfineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Electrode {
    #[serde(rename = "MW1")]
    Mw1,
    #[serde(rename = "MW2")]
    Mw2,
    #[serde(rename = "MW3")]
    Mw3,
}

impl Electrode {
    pub const ALL: [Electrode; 3] = [Electrode::Mw1, Electrode::Mw2, Electrode::Mw3];

    pub fn index(self) -> usize {
        match self {
            Electrode::Mw1 => 0,
            Electrode::Mw2 => 1,
            Electrode::Mw3 => 2,
        }
    }
}

impl fmt::Display for Electrode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MW{}", self.index() + 1)
    }
}

/// Field per ampere of one electrode.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeBasisField {
    pub electrode: Electrode,
    /// (B_x, B_z) at the origin, T/A.
    pub uniform: Vector2<C>,
    /// ∂B_i/∂r_j, T m⁻¹ A⁻¹.
    pub quadrupole: Matrix2<C>,
}

impl ElectrodeBasisField {
    /// Checks symmetry and tracelessness of both real and imaginary parts.
    pub fn validate(&self) -> Result<(), FieldError> {
        let g = &self.quadrupole;
        let scale = g.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Ok(());
        }
        let asym = (g[(0, 1)] - g[(1, 0)]).norm() / scale;
        let trace = (g[(0, 0)] + g[(1, 1)]).norm() / scale;
        if asym > MAXWELL_TOLERANCE {
            return Err(FieldError::MaxwellViolation {
                electrode: self.electrode,
                reason: format!("quadrupole not symmetric (relative {asym:.2e})"),
            });
        }
        if trace > MAXWELL_TOLERANCE {
            return Err(FieldError::MaxwellViolation {
                electrode: self.electrode,
                reason: format!("quadrupole not traceless (relative {trace:.2e})"),
            });
        }
        Ok(())
    }
}

/// Complex current amplitudes (A) on MW1..MW3 and the drive frequency (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfiguration {
    pub currents: [C; 3],
    pub drive_frequency: f64,
}

impl DriveConfiguration {
    pub fn new(currents: [C; 3], drive_frequency: f64) -> Self {
        DriveConfiguration { currents, drive_frequency }
    }

    pub fn current(&self, electrode: Electrode) -> C {
        self.currents[electrode.index()]
    }

    pub fn is_active(&self) -> bool {
        self.currents.iter().any(|c| c.norm() > 0.0)
    }

    /// All currents multiplied by `factor`.
    pub fn scaled(&self, factor: C) -> Self {
        DriveConfiguration { currents: self.currents.map(|c| c * factor), drive_frequency: self.drive_frequency }
    }
}

/// Unit vector of the static field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizationAxis(Vector3<f64>);

impl QuantizationAxis {
    /// Normalizes `v`; returns `None` for a zero vector.
    pub fn new(v: Vector3<f64>) -> Option<Self> {
        let n = v.norm();
        (n > 0.0 && n.is_finite()).then(|| QuantizationAxis(v / n))
    }

    /// Axis in the y-z plane at `degrees` from the z axis towards +y.
    pub fn from_yz_angle_deg(degrees: f64) -> Self {
        let t = degrees.to_radians();
        QuantizationAxis(Vector3::new(0.0, t.sin(), t.cos()))
    }

    pub fn vector(&self) -> Vector3<f64> {
        self.0
    }
}

impl Default for QuantizationAxis {
    fn default() -> Self {
        Self::from_yz_angle_deg(15.0)
    }
}

/// Field split into the component along the quantization axis and the
/// magnitude of the orthogonal remainder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub parallel: C,
    pub perpendicular: f64,
}

/// Projects the x-z field (embedded with zero y component) on `axis`.
pub fn decompose(field: Vector2<C>, axis: &QuantizationAxis) -> Decomposition {
    let n = axis.vector();
    let full = [field[0], C::new(0.0, 0.0), field[1]];
    let parallel = full[0] * n[0] + full[1] * n[1] + full[2] * n[2];
    let perpendicular = (0..3).map(|i| (full[i] - parallel * n[i]).norm_sqr()).sum::<f64>().sqrt();
    Decomposition { parallel, perpendicular }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub position: Vector2<f64>,
    pub field: Vector2<C>,
    pub parallel_amplitude: C,
    pub perpendicular_amplitude: f64,
    /// ∇|B_∥| along (x, z), T/m.
    pub gradient_parallel: Vector2<f64>,
    pub outside_validity: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullPoint {
    pub position: Vector2<f64>,
    /// min |B|², T².
    pub residual_sq: f64,
    pub imperfect: bool,
}

/// T_π at one grid point; `f64::INFINITY` where the drive vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiTimePoint {
    pub position: Vector2<f64>,
    pub parallel: C,
    pub perpendicular: f64,
    pub pi_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiTimeMap {
    pub points: Vec<PiTimePoint>,
    pub outside_validity: bool,
}

/// The three electrode bases together with the quantization axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldModel {
    bases: [ElectrodeBasisField; 3],
    pub axis: QuantizationAxis,
    pub validity_radius: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct FixtureFile {
    electrode: Vec<FixtureElectrode>,
}

#[derive(Debug, Deserialize, Serialize)]
#[allow(non_snake_case)]
struct FixtureElectrode {
    id: Electrode,
    /// [[re, im] of B_x, [re, im] of B_z]
    uniform_T_per_A: [[f64; 2]; 2],
    /// rows (x, z) of ∂B_i/∂r_j as [re, im] pairs
    quadrupole_T_per_m_per_A: [[[f64; 2]; 2]; 2],
}

impl FieldModel {
    pub fn new(bases: Vec<ElectrodeBasisField>, axis: QuantizationAxis) -> Result<Self, FieldError> {
        let mut slots: [Option<ElectrodeBasisField>; 3] = [None, None, None];
        for b in bases {
            b.validate()?;
            let i = b.electrode.index();
            if slots[i].is_some() {
                return Err(FieldError::IncompleteBasis);
            }
            slots[i] = Some(b);
        }
        let [a, b, c] = slots;
        match (a, b, c) {
            (Some(a), Some(b), Some(c)) => {
                Ok(FieldModel { bases: [a, b, c], axis, validity_radius: DEFAULT_VALIDITY_RADIUS })
            }
            _ => Err(FieldError::IncompleteBasis),
        }
    }

    pub fn from_fixture_str(text: &str, axis: QuantizationAxis) -> Result<Self, FieldError> {
        let file: FixtureFile = toml::from_str(text)?;
        let c = |p: [f64; 2]| C::new(p[0], p[1]);
        let bases = file
            .electrode
            .into_iter()
            .map(|e| ElectrodeBasisField {
                electrode: e.id,
                uniform: Vector2::new(c(e.uniform_T_per_A[0]), c(e.uniform_T_per_A[1])),
                quadrupole: Matrix2::new(
                    c(e.quadrupole_T_per_m_per_A[0][0]),
                    c(e.quadrupole_T_per_m_per_A[0][1]),
                    c(e.quadrupole_T_per_m_per_A[1][0]),
                    c(e.quadrupole_T_per_m_per_A[1][1]),
                ),
            })
            .collect();
        Self::new(bases, axis)
    }

    pub fn from_fixture_file(path: &Path, axis: QuantizationAxis) -> Result<Self, FieldError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| FieldError::Io { path: path.display().to_string(), source })?;
        Self::from_fixture_str(&text, axis)
    }

    /// The bundled synthetic fixture with the default 15° axis.
    pub fn default_fixture() -> Self {
        Self::from_fixture_str(BASIS_FIXTURE_TOML, QuantizationAxis::default())
            .expect("bundled fixture is valid")
    }

    pub fn bases(&self) -> &[ElectrodeBasisField; 3] {
        &self.bases
    }

    pub fn within_validity(&self, position: Vector2<f64>) -> bool {
        position.norm() <= self.validity_radius
    }

    /// Σ I_k u_k and Σ I_k G_k.
    pub fn combined(&self, drive: &DriveConfiguration) -> (Vector2<C>, Matrix2<C>) {
        let mut u = Vector2::zeros();
        let mut g = Matrix2::zeros();
        for b in &self.bases {
            let i = drive.current(b.electrode);
            u += b.uniform * i;
            g += b.quadrupole * i;
        }
        (u, g)
    }

    /// B(r) in tesla; r = (x, z) in metres.
    pub fn field_at(&self, drive: &DriveConfiguration, position: Vector2<f64>) -> Vector2<C> {
        let (u, g) = self.combined(drive);
        u + g * position.map(|v| C::new(v, 0.0))
    }

    /// Complex gradient of B_∥ along (x, z), T/m.
    pub fn parallel_gradient(&self, drive: &DriveConfiguration) -> Vector2<C> {
        let (_, g) = self.combined(drive);
        let n = self.axis.vector();
        // B_∥ = n_x B_x + n_z B_z; the y component of the field is zero.
        Vector2::new(g[(0, 0)] * n[0] + g[(1, 0)] * n[2], g[(0, 1)] * n[0] + g[(1, 1)] * n[2])
    }

    pub fn sample(&self, drive: &DriveConfiguration, position: Vector2<f64>) -> FieldSample {
        let field = self.field_at(drive, position);
        let d = decompose(field, &self.axis);
        let g = self.parallel_gradient(drive);
        let magnitude = d.parallel.norm();
        let gradient_parallel = if magnitude > 0.0 {
            g.map(|gi| (d.parallel.conj() * gi).re / magnitude)
        } else {
            g.map(|gi| gi.norm())
        };
        FieldSample {
            position,
            field,
            parallel_amplitude: d.parallel,
            perpendicular_amplitude: d.perpendicular,
            gradient_parallel,
            outside_validity: !self.within_validity(position),
        }
    }

    /// Minimizer of |B(r)|² over the x-z plane.
    ///
    /// With c = Σ I u and M = Σ I G this is the real least-squares problem
    /// [Re M; Im M] r ≈ −[Re c; Im c].
    pub fn find_null(&self, drive: &DriveConfiguration) -> Result<NullPoint, FieldError> {
        let (c, m) = self.combined(drive);
        let stacked = Matrix4x2::new(
            m[(0, 0)].re, m[(0, 1)].re,
            m[(1, 0)].re, m[(1, 1)].re,
            m[(0, 0)].im, m[(0, 1)].im,
            m[(1, 0)].im, m[(1, 1)].im,
        );
        let rhs = -Vector4::new(c[0].re, c[1].re, c[0].im, c[1].im);
        let svd = stacked.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
        if !(ratio > NULL_CONDITIONING_LIMIT) {
            return Err(FieldError::SingularGradient { ratio });
        }
        let position = svd.solve(&rhs, 0.0).map_err(|_| FieldError::SingularGradient { ratio })?;
        let residual_sq = self.field_at(drive, position).norm_squared();
        Ok(NullPoint { position, residual_sq, imperfect: residual_sq > IMPERFECT_NULL_THRESHOLD })
    }

    /// π time of the `qubit` transition at each grid position.
    pub fn pi_time_map(
        &self,
        drive: &DriveConfiguration,
        levels: &LevelSet,
        qubit: QubitPair,
        grid: &[Vector2<f64>],
    ) -> Result<PiTimeMap, FieldError> {
        let mut outside_validity = false;
        let points = grid
            .iter()
            .map(|&position| {
                outside_validity |= !self.within_validity(position);
                let d = decompose(self.field_at(drive, position), &self.axis);
                let omega = rabi_rate(levels, qubit.down, qubit.up, d.parallel, C::new(d.perpendicular, 0.0))?;
                let pi_time = if omega > 0.0 { std::f64::consts::PI / omega } else { f64::INFINITY };
                Ok(PiTimePoint { position, parallel: d.parallel, perpendicular: d.perpendicular, pi_time })
            })
            .collect::<Result<Vec<_>, FieldError>>()?;
        Ok(PiTimeMap { points, outside_validity })
    }
}

/// Regular grid of `nx × nz` points spanning the given x and z ranges (metres).
pub fn grid(x_range: (f64, f64), z_range: (f64, f64), nx: usize, nz: usize) -> Vec<Vector2<f64>> {
    let axis = |(lo, hi): (f64, f64), n: usize, k: usize| {
        if n <= 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        }
    };
    (0..nz)
        .flat_map(|iz| (0..nx).map(move |ix| Vector2::new(axis(x_range, nx, ix), axis(z_range, nz, iz))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::AtomParameters;
    use crate::hyperfine::diagonalize;
    use crate::units::{MT, NM};

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn drive(i: [C; 3]) -> DriveConfiguration {
        DriveConfiguration::new(i, 0.0)
    }

    #[test]
    fn zero_currents_give_zero_field() {
        let m = FieldModel::default_fixture();
        let d = drive([c(0.0, 0.0); 3]);
        assert_eq!(m.field_at(&d, Vector2::new(1e-6, -2e-6)), Vector2::zeros());
    }

    #[test]
    fn single_electrode_at_origin_is_uniform_term() {
        let m = FieldModel::default_fixture();
        let i = c(0.3, -0.2);
        let d = drive([c(0.0, 0.0), i, c(0.0, 0.0)]);
        let b = m.field_at(&d, Vector2::zeros());
        assert_eq!(b, m.bases()[1].uniform * i);
    }

    #[test]
    fn decomposition_geometry() {
        let axis = QuantizationAxis::from_yz_angle_deg(15.0);
        let fx = Vector2::new(c(2e-6, 1e-6), c(0.0, 0.0));
        let d = decompose(fx, &axis);
        assert!(d.parallel.norm() < 1e-20);
        assert!((d.perpendicular - fx[0].norm()).abs() < 1e-18);

        let fz = Vector2::new(c(0.0, 0.0), c(3e-6, 0.0));
        let d = decompose(fz, &axis);
        assert!((d.parallel - fz[1] * 15f64.to_radians().cos()).norm() < 1e-18);
    }

    #[test]
    fn fixture_satisfies_maxwell_constraints() {
        for b in FieldModel::default_fixture().bases() {
            b.validate().unwrap();
        }
    }

    #[test]
    fn asymmetric_quadrupole_is_rejected() {
        let bad = ElectrodeBasisField {
            electrode: Electrode::Mw1,
            uniform: Vector2::zeros(),
            quadrupole: Matrix2::new(c(1.0, 0.0), c(2.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)),
        };
        assert!(matches!(bad.validate(), Err(FieldError::MaxwellViolation { .. })));
        let bad = ElectrodeBasisField {
            quadrupole: Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)),
            ..bad
        };
        assert!(matches!(bad.validate(), Err(FieldError::MaxwellViolation { .. })));
    }

    #[test]
    fn missing_electrode_is_rejected() {
        let b = FieldModel::default_fixture().bases()[0].clone();
        assert!(matches!(
            FieldModel::new(vec![b.clone(), b], QuantizationAxis::default()),
            Err(FieldError::IncompleteBasis)
        ));
    }

    #[test]
    fn null_at_origin_without_uniform_terms() {
        let mut bases = FieldModel::default_fixture().bases().to_vec();
        for b in &mut bases {
            b.uniform = Vector2::zeros();
        }
        let m = FieldModel::new(bases, QuantizationAxis::default()).unwrap();
        let null = m.find_null(&drive([c(0.1, 0.0), c(0.0, 0.05), c(-0.02, 0.01)])).unwrap();
        assert!(null.position.norm() < 1e-18);
        assert!(!null.imperfect);
    }

    #[test]
    fn singular_gradient_is_reported() {
        let mut bases = FieldModel::default_fixture().bases().to_vec();
        for b in &mut bases {
            b.quadrupole = Matrix2::zeros();
        }
        let m = FieldModel::new(bases, QuantizationAxis::default()).unwrap();
        assert!(matches!(
            m.find_null(&drive([c(1.0, 0.0); 3])),
            Err(FieldError::SingularGradient { .. })
        ));
    }

    #[test]
    fn pi_time_map_infinite_at_perfect_null_and_halves_with_current() {
        let mut bases = FieldModel::default_fixture().bases().to_vec();
        for b in &mut bases {
            b.uniform = Vector2::zeros();
        }
        let m = FieldModel::new(bases, QuantizationAxis::default()).unwrap();
        let levels = diagonalize(&AtomParameters::mg25(), 21.3 * MT).unwrap();
        let d = drive([c(0.01, 0.0), c(0.02, 0.0), c(-0.01, 0.0)]);
        let pts = grid((-300.0 * NM, 300.0 * NM), (-300.0 * NM, 300.0 * NM), 3, 3);
        let map = m.pi_time_map(&d, &levels, QubitPair::default(), &pts).unwrap();
        assert!(map.points[4].pi_time.is_infinite());
        let map2 = m.pi_time_map(&d.scaled(c(2.0, 0.0)), &levels, QubitPair::default(), &pts).unwrap();
        for (a, b) in map.points.iter().zip(&map2.points) {
            if a.pi_time.is_finite() {
                assert!((b.pi_time - 0.5 * a.pi_time).abs() < 1e-12 * a.pi_time);
            }
        }
        assert!(!map.outside_validity);
    }

    #[test]
    fn grid_shape() {
        let g = grid((-1.0, 1.0), (0.0, 2.0), 12, 10);
        assert_eq!(g.len(), 120);
        assert_eq!(g[0], Vector2::new(-1.0, 0.0));
        assert_eq!(g[119], Vector2::new(1.0, 2.0));
        assert_eq!(grid((-1.0, 1.0), (2.0, 4.0), 1, 1), vec![Vector2::new(0.0, 3.0)]);
    }
}
