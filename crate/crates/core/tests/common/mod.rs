//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the crate's numerics.

#![allow(dead_code, clippy::needless_range_loop)]

use num_complex::Complex64 as C;
use std::f64::consts::PI;

pub const MU_B_HZ_PER_T: f64 = 13.996_244_936e9;

// ---------------------------------------------------------------- linear algebra

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(n: usize) -> Mat {
    vec![vec![0.0; n]; n]
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (n, m) = (a.len(), b.len());
    let mut out = zeros(n * m);
    for i in 0..n {
        for j in 0..n {
            for k in 0..m {
                for l in 0..m {
                    out[i * m + k][j * m + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn identity(n: usize) -> Mat {
    let mut m = zeros(n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn add_scaled(acc: &mut Mat, m: &Mat, s: f64) {
    for (ra, rm) in acc.iter_mut().zip(m) {
        for (a, v) in ra.iter_mut().zip(rm) {
            *a += s * v;
        }
    }
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut out = zeros(n);
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// Spin matrices (J_z, J_x, J_y·i) for spin `j` in the basis m = j, j−1, …, −j.
/// The last entry is i·J_y, which is real.
pub fn spin_matrices(j: f64) -> (Mat, Mat, Mat) {
    let n = (2.0 * j).round() as usize + 1;
    let m = |k: usize| j - k as f64;
    let mut jz = zeros(n);
    let mut jp = zeros(n);
    for k in 0..n {
        jz[k][k] = m(k);
        if k > 0 {
            // ⟨m+1|J+|m⟩ with |m⟩ at index k and |m+1⟩ at k−1
            jp[k - 1][k] = (j * (j + 1.0) - m(k) * (m(k) + 1.0)).sqrt();
        }
    }
    let jm: Mat = (0..n).map(|r| (0..n).map(|c| jp[c][r]).collect()).collect();
    let mut jx = zeros(n);
    let mut ijy = zeros(n);
    for r in 0..n {
        for c in 0..n {
            jx[r][c] = 0.5 * (jp[r][c] + jm[r][c]);
            ijy[r][c] = 0.5 * (jp[r][c] - jm[r][c]);
        }
    }
    (jz, jx, ijy)
}

/// Cyclic Jacobi eigen-decomposition of a real symmetric matrix. Returns the
/// eigenvalues and the eigenvectors as columns.
pub fn jacobi_eigen(mut a: Mat) -> (Vec<f64>, Mat) {
    let n = a.len();
    let mut v = identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1.0);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

// ---------------------------------------------------------------- hyperfine

pub struct Atom {
    pub i: f64,
    pub j: f64,
    /// ordinary frequency, Hz
    pub a_hz: f64,
    pub g_j: f64,
    pub g_i: f64,
}

/// Literature constants for the ²⁵Mg⁺ ground state.
pub fn mg25() -> Atom {
    Atom { i: 2.5, j: 0.5, a_hz: -596.254376e6, g_j: 2.00231930436, g_i: 0.85545 / 1836.15267343 / 2.5 }
}

/// Eigenvalues (Hz) and m_F of each eigenstate, from H = A I·J + μ_B B (g_J J_z + g_I I_z)
/// built with Kronecker products (nuclear ⊗ electronic).
pub fn hyperfine_levels(atom: &Atom, field: f64) -> Vec<(f64, f64)> {
    let (iz, ix, iiy) = spin_matrices(atom.i);
    let (jz, jx, ijy) = spin_matrices(atom.j);
    let ni = iz.len();
    let nj = jz.len();
    let n = ni * nj;
    let mut h = zeros(n);
    add_scaled(&mut h, &kron(&iz, &jz), atom.a_hz);
    add_scaled(&mut h, &kron(&ix, &jx), atom.a_hz);
    // I_y J_y = −(iI_y)(iJ_y)
    add_scaled(&mut h, &kron(&iiy, &ijy), -atom.a_hz);
    add_scaled(&mut h, &kron(&identity(ni), &jz), MU_B_HZ_PER_T * field * atom.g_j);
    add_scaled(&mut h, &kron(&iz, &identity(nj)), MU_B_HZ_PER_T * field * atom.g_i);
    let fz = {
        let mut f = kron(&iz, &identity(nj));
        add_scaled(&mut f, &kron(&identity(ni), &jz), 1.0);
        f
    };
    let (vals, vecs) = jacobi_eigen(h);
    (0..n)
        .map(|k| {
            let col: Vec<f64> = (0..n).map(|r| vecs[r][k]).collect();
            let mf: f64 = (0..n).map(|r| col[r] * (0..n).map(|c| fz[r][c] * col[c]).sum::<f64>()).sum();
            (vals[k], mf)
        })
        .collect()
}

/// Splitting (Hz) between the two m_F = `mf` levels; for |m_F| < I + J there
/// are exactly two.
pub fn clock_frequency_hz(atom: &Atom, field: f64, mf: f64) -> f64 {
    let e: Vec<f64> = hyperfine_levels(atom, field).into_iter().filter(|(_, m)| (m - mf).abs() < 1e-6).map(|(e, _)| e).collect();
    assert_eq!(e.len(), 2);
    (e[0] - e[1]).abs()
}

/// Extremum of the m_F = 1 splitting, by bisection on the sign of a
/// finite-difference slope.
pub fn clock_point(atom: &Atom, lo: f64, hi: f64) -> (f64, f64) {
    let f = |b: f64| clock_frequency_hz(atom, b, 1.0);
    let slope = |b: f64| (f(b + 1e-6) - f(b - 1e-6)) / 2e-6;
    let (mut a, mut c) = (lo, hi);
    let sa = slope(a).signum();
    assert!(sa != slope(c).signum(), "no stationary point in range");
    for _ in 0..60 {
        let m = 0.5 * (a + c);
        if slope(m).signum() == sa {
            a = m;
        } else {
            c = m;
        }
    }
    let b = 0.5 * (a + c);
    (b, f(b))
}

// ---------------------------------------------------------------- two-level dynamics

/// H = (Ω/2)(cos φ σx + sin φ σy) + (Δ/2)σz in the basis (↑, ↓).
pub fn two_level_h(rabi: f64, phase: f64, detuning: f64) -> [[C; 2]; 2] {
    let off = C::from_polar(0.5 * rabi, -phase);
    [[C::new(0.5 * detuning, 0.0), off], [off.conj(), C::new(-0.5 * detuning, 0.0)]]
}

fn deriv(h: &[[C; 2]; 2], y: [C; 2]) -> [C; 2] {
    let mi = C::new(0.0, -1.0);
    [mi * (h[0][0] * y[0] + h[0][1] * y[1]), mi * (h[1][0] * y[0] + h[1][1] * y[1])]
}

/// Adaptive Dormand–Prince 5(4) integration of i dψ/dt = Hψ for a constant H.
/// `y` is (↑, ↓).
pub fn integrate_schrodinger(h: [[C; 2]; 2], y0: [C; 2], t_end: f64, rtol: f64) -> [C; 2] {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] =
        [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];
    if t_end == 0.0 {
        return y0;
    }
    let scale = h.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
    let mut dt = (0.1 / scale).min(t_end);
    let mut t = 0.0;
    let mut y = y0;
    while t < t_end {
        if t + dt > t_end {
            dt = t_end - t;
        }
        let mut k = [[C::new(0.0, 0.0); 2]; 7];
        k[0] = deriv(&h, y);
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s - 1][j];
                ys[0] += kj[0] * (a * dt);
                ys[1] += kj[1] * (a * dt);
            }
            k[s] = deriv(&h, ys);
        }
        let mut y5 = y;
        let mut y4 = y;
        for s in 0..7 {
            for c in 0..2 {
                y5[c] += k[s][c] * (B5[s] * dt);
                y4[c] += k[s][c] * (B4[s] * dt);
            }
        }
        let err = ((y5[0] - y4[0]).norm().powi(2) + (y5[1] - y4[1]).norm().powi(2)).sqrt();
        let tol = rtol * (y5[0].norm().powi(2) + y5[1].norm().powi(2)).sqrt().max(1e-300);
        if err <= tol {
            t += dt;
            y = y5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 5.0) };
        dt *= factor;
    }
    y
}

/// exp(−iHt) for a small complex matrix by scaling and squaring of a Taylor series.
pub fn expm_minus_i(h: &[Vec<C>], t: f64) -> Vec<Vec<C>> {
    let n = h.len();
    let norm: f64 = h.iter().map(|r| r.iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max) * t.abs();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let s = t / 2f64.powi(squarings as i32);
    let a: Vec<Vec<C>> = h.iter().map(|r| r.iter().map(|v| v * C::new(0.0, -s)).collect()).collect();
    let mul = |x: &Vec<Vec<C>>, y: &Vec<Vec<C>>| -> Vec<Vec<C>> {
        (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| x[i][k] * y[k][j]).sum()).collect()).collect()
    };
    let mut result: Vec<Vec<C>> = (0..n).map(|i| (0..n).map(|j| C::new((i == j) as u8 as f64, 0.0)).collect()).collect();
    let mut term = result.clone();
    for k in 1..40 {
        term = mul(&term, &a).into_iter().map(|r| r.into_iter().map(|v| v / k as f64).collect()).collect();
        for i in 0..n {
            for j in 0..n {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = mul(&result, &result);
    }
    result
}

/// Two-ion Hamiltonian H₁⊗1 + 1⊗H₂ in the basis (↑↑, ↑↓, ↓↑, ↓↓), ion 1 first.
pub fn two_ion_h(h1: [[C; 2]; 2], h2: [[C; 2]; 2]) -> Vec<Vec<C>> {
    let mut h = vec![vec![C::new(0.0, 0.0); 4]; 4];
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    let mut v = C::new(0.0, 0.0);
                    if b == d {
                        v += h1[a][c];
                    }
                    if a == c {
                        v += h2[b][d];
                    }
                    h[2 * a + b][2 * c + d] = v;
                }
            }
        }
    }
    h
}

/// Spectator (ion 1) flip probability when a resonant π pulse is applied to
/// ion 2, from the full two-ion propagator starting in ↓↓.
pub fn spectator_flip_full_unitary(addressed: f64, spectator: f64) -> f64 {
    let h = two_ion_h(two_level_h(spectator, 0.0, 0.0), two_level_h(addressed, 0.0, 0.0));
    let u = expm_minus_i(&h, PI / addressed);
    // ion 1 up: rows ↑↑ (0) and ↑↓ (1); start in ↓↓ (column 3)
    u[0][3].norm_sqr() + u[1][3].norm_sqr()
}

// ---------------------------------------------------------------- fields

/// Uniform + gradient field model evaluated from raw per-electrode data.
pub struct RawBasis {
    pub uniform: [[C; 2]; 3],
    /// [electrode][row][col] = ∂B_row/∂r_col
    pub quad: [[[C; 2]; 2]; 3],
}

impl RawBasis {
    pub fn field(&self, currents: &[C; 3], r: [f64; 2]) -> [C; 2] {
        let mut b = [C::new(0.0, 0.0); 2];
        for e in 0..3 {
            for row in 0..2 {
                b[row] += currents[e] * (self.uniform[e][row] + self.quad[e][row][0] * r[0] + self.quad[e][row][1] * r[1]);
            }
        }
        b
    }

    pub fn field_sq(&self, currents: &[C; 3], r: [f64; 2]) -> f64 {
        let b = self.field(currents, r);
        b[0].norm_sqr() + b[1].norm_sqr()
    }
}

/// Minimizer of |B|² by a coarse grid scan followed by Newton steps on the
/// quadratic form, refined with the analytic gradient from finite differences.
pub fn grid_null(basis: &RawBasis, currents: &[C; 3], half_width: f64, n: usize) -> [f64; 2] {
    let mut best = ([0.0, 0.0], f64::INFINITY);
    for i in 0..n {
        for j in 0..n {
            let r = [
                -half_width + 2.0 * half_width * i as f64 / (n - 1) as f64,
                -half_width + 2.0 * half_width * j as f64 / (n - 1) as f64,
            ];
            let v = basis.field_sq(currents, r);
            if v < best.1 {
                best = (r, v);
            }
        }
    }
    // |B|² is exactly quadratic in r: recover its Hessian and gradient by
    // central differences at the grid minimum and take Newton steps.
    let mut r = best.0;
    let h = half_width / n as f64;
    for _ in 0..4 {
        let f = |x: f64, z: f64| basis.field_sq(currents, [x, z]);
        let (x, z) = (r[0], r[1]);
        let gx = (f(x + h, z) - f(x - h, z)) / (2.0 * h);
        let gz = (f(x, z + h) - f(x, z - h)) / (2.0 * h);
        let hxx = (f(x + h, z) - 2.0 * f(x, z) + f(x - h, z)) / (h * h);
        let hzz = (f(x, z + h) - 2.0 * f(x, z) + f(x, z - h)) / (h * h);
        let hxz = (f(x + h, z + h) - f(x + h, z - h) - f(x - h, z + h) + f(x - h, z - h)) / (4.0 * h * h);
        let det = hxx * hzz - hxz * hxz;
        let dx = (hzz * gx - hxz * gz) / det;
        let dz = (hxx * gz - hxz * gx) / det;
        r = [x - dx, z - dz];
    }
    r
}

/// Least-squares solution of a complex system A x = b by conjugate gradients
/// on the normal equations.
pub fn cg_least_squares(a: &[Vec<C>], b: &[C], iterations: usize) -> Vec<C> {
    let (m, n) = (a.len(), a[0].len());
    let apply = |x: &[C]| -> Vec<C> { (0..m).map(|i| (0..n).map(|j| a[i][j] * x[j]).sum()).collect() };
    let apply_h = |y: &[C]| -> Vec<C> { (0..n).map(|j| (0..m).map(|i| a[i][j].conj() * y[i]).sum()).collect() };
    let dot = |u: &[C], v: &[C]| -> C { u.iter().zip(v).map(|(x, y)| x.conj() * y).sum() };
    let mut x = vec![C::new(0.0, 0.0); n];
    let mut r = apply_h(b);
    let mut p = r.clone();
    let mut rs = dot(&r, &r).re;
    for _ in 0..iterations {
        if rs < 1e-300 {
            break;
        }
        let ap = apply_h(&apply(&p));
        let alpha = rs / dot(&p, &ap).re;
        for k in 0..n {
            x[k] += p[k] * alpha;
            r[k] -= ap[k] * alpha;
        }
        let rs_new = dot(&r, &r).re;
        let beta = rs_new / rs;
        for k in 0..n {
            p[k] = r[k] + p[k] * beta;
        }
        rs = rs_new;
    }
    x
}

/// Currents for a null at `r0` with ∂B_∥/∂d = `gradient`, from finite-difference
/// rows of the raw basis and a CG least-squares solve. Gauge: first non-zero
/// current real positive.
pub fn design_oracle(basis: &RawBasis, axis_xz: [f64; 2], r0: [f64; 2], d: [f64; 2], gradient: f64) -> [C; 3] {
    let unit = |e: usize| {
        let mut c = [C::new(0.0, 0.0); 3];
        c[e] = C::new(1.0, 0.0);
        c
    };
    let h = 1e-7;
    let mut a = vec![vec![C::new(0.0, 0.0); 3]; 3];
    for e in 0..3 {
        let b0 = basis.field(&unit(e), r0);
        let bp = basis.field(&unit(e), [r0[0] + h * d[0], r0[1] + h * d[1]]);
        let bm = basis.field(&unit(e), [r0[0] - h * d[0], r0[1] - h * d[1]]);
        a[0][e] = b0[0];
        a[1][e] = b0[1];
        let par = |b: [C; 2]| b[0] * axis_xz[0] + b[1] * axis_xz[1];
        a[2][e] = (par(bp) - par(bm)) / (2.0 * h);
    }
    // row scaling keeps CG well conditioned
    let mut rhs = vec![C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(gradient, 0.0)];
    for (row, v) in a.iter_mut().zip(rhs.iter_mut()) {
        let n = row.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        row.iter_mut().for_each(|x| *x /= n);
        *v /= n;
    }
    let x = cg_least_squares(&a, &rhs, 200);
    let first = x.iter().find(|c| c.norm() > 0.0).copied().unwrap();
    let rot = first.conj() / first.norm();
    [x[0] * rot, x[1] * rot, x[2] * rot]
}

// ---------------------------------------------------------------- trap

pub const COULOMB: f64 = 8.987_551_792_3e9;
pub const CHARGE: f64 = 1.602_176_634e-19;

/// Separation minimizing ½ m ω² ((d/2)² + (d/2)²) + k q²/d by grid scan and
/// golden-section refinement.
pub fn brute_force_spacing(mass: f64, axial: f64) -> f64 {
    let u = |d: f64| 0.25 * mass * axial * axial * d * d + COULOMB * CHARGE * CHARGE / d;
    let (lo, hi): (f64, f64) = (0.1e-6, 100e-6);
    let n = 20_000;
    let mut best = (lo, f64::INFINITY);
    for k in 0..=n {
        let d = lo * (hi / lo).powf(k as f64 / n as f64);
        let v = u(d);
        if v < best.1 {
            best = (d, v);
        }
    }
    let ratio = (hi / lo).powf(1.0 / n as f64);
    let (mut a, mut b) = (best.0 / ratio, best.0 * ratio);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if u(c) < u(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

// ---------------------------------------------------------------- misc

/// Deterministic xorshift generator for reproducible random test inputs.
pub struct XorShift(pub u64);

impl XorShift {
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}

/// Random symmetric, traceless complex 2×2 matrix with entries in ±`scale`.
pub fn random_quadrupole(rng: &mut XorShift, scale: f64) -> nalgebra::Matrix2<C> {
    let a = C::new(rng.range(-scale, scale), rng.range(-scale, scale));
    let b = C::new(rng.range(-scale, scale), rng.range(-scale, scale));
    nalgebra::Matrix2::new(a, b, b, -a)
}
