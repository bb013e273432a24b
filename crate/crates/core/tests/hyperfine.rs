mod common;

use std::f64::consts::TAU;

use nearfield::constants::AtomParameters;
use nearfield::hyperfine::{
    ac_zeeman_coefficients, diagonalize, field_independent_point, hamiltonian, rabi_rate, transition_frequency,
    transition_slope, HyperfineError, LevelLabel, QubitPair,
};
use nearfield::units::{mhz, MT, UT};
use num_complex::Complex64 as C;

fn atom() -> AtomParameters {
    AtomParameters::mg25()
}

fn l(f: f64, m: f64) -> LevelLabel {
    LevelLabel::new(f, m)
}

#[test]
fn energies_match_kronecker_oracle() {
    let oracle_atom = common::mg25();
    for field in [0.0, 1.0 * MT, 21.3 * MT, 40.0 * MT] {
        let levels = diagonalize(&atom(), field).unwrap();
        let mut ours: Vec<f64> = levels.levels().iter().map(|v| v.energy).collect();
        let mut theirs: Vec<f64> = common::hyperfine_levels(&oracle_atom, field).iter().map(|(e, _)| TAU * e).collect();
        ours.sort_by(f64::total_cmp);
        theirs.sort_by(f64::total_cmp);
        assert_eq!(ours.len(), 12);
        let scale = theirs.iter().map(|e| e.abs()).fold(0.0, f64::max);
        for (a, b) in ours.iter().zip(&theirs) {
            assert!((a - b).abs() <= 1e-10 * scale, "{field}: {a} vs {b}");
        }
    }
}

#[test]
fn zero_field_manifolds() {
    let a = atom();
    let levels = diagonalize(&a, 0.0).unwrap();
    let f3: Vec<f64> = levels.levels().iter().filter(|v| v.label.f() == 3.0).map(|v| v.energy).collect();
    let f2: Vec<f64> = levels.levels().iter().filter(|v| v.label.f() == 2.0).map(|v| v.energy).collect();
    assert_eq!((f3.len(), f2.len()), (7, 5));
    let spread = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread(&f3) < 1e-6 && spread(&f2) < 1e-6);
    let split = (f3[0] - f2[0]).abs();
    assert!((split - 3.0 * a.hyperfine_a.abs()).abs() < 1e-6 * split);
    assert!(transition_frequency(&levels, l(3.0, 3.0), l(3.0, 2.0)).unwrap() < 1e-6);
}

#[test]
fn level_set_invariants() {
    let a = atom();
    for field in [0.5 * MT, 21.3 * MT] {
        let levels = diagonalize(&a, field).unwrap();
        let energies: Vec<f64> = levels.levels().iter().map(|v| v.energy).collect();
        assert!(energies.windows(2).all(|w| w[0] <= w[1]));
        let basis = levels.basis();
        for (i, x) in levels.levels().iter().enumerate() {
            let norm: f64 = x.amplitudes.iter().map(|c| c.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-12);
            for (k, amp) in x.amplitudes.iter().enumerate() {
                if amp.norm() > 1e-12 {
                    let mf = (basis[k].twice_mi + basis[k].twice_mj) as f64 / 2.0;
                    assert_eq!(mf, x.label.m_f());
                }
            }
            for y in &levels.levels()[i + 1..] {
                let overlap: C = x.amplitudes.iter().zip(&y.amplitudes).map(|(p, q)| p.conj() * q).sum();
                assert!(overlap.norm() < 1e-10);
            }
        }
        let h = hamiltonian(&a, field);
        let trace: f64 = (0..12).map(|k| h[(k, k)]).sum();
        let sum: f64 = energies.iter().sum();
        assert!((trace - sum).abs() <= 1e-9 * energies.iter().map(|e| e.abs()).sum::<f64>());
    }
}

#[test]
fn stretch_transition_matches_oracle_and_has_no_stationary_point() {
    let levels = diagonalize(&atom(), 21.3 * MT).unwrap();
    let ours = transition_frequency(&levels, l(3.0, 3.0), l(2.0, 2.0)).unwrap();
    let oracle = common::hyperfine_levels(&common::mg25(), 21.3 * MT);
    let e = |mf: f64| -> Vec<f64> { oracle.iter().filter(|(_, m)| (m - mf).abs() < 1e-6).map(|(e, _)| *e).collect() };
    // |3,3> is the only m_F = 3 state; |2,2> is the F = 2 member of the m_F = 2 pair,
    // which lies above F = 3 for A < 0
    let e33 = e(3.0)[0];
    let pair = e(2.0);
    let e22 = pair.iter().cloned().fold(f64::MIN, f64::max);
    assert!((ours - TAU * (e33 - e22).abs()).abs() < 1e-6 * ours);
    assert!(matches!(
        field_independent_point(&atom(), l(3.0, 3.0), l(2.0, 2.0), (5.0 * MT, 40.0 * MT)),
        Err(HyperfineError::NoStationaryPoint { .. })
    ));
}

#[test]
fn transition_frequency_symmetric_and_rejects_identical() {
    let levels = diagonalize(&atom(), 21.3 * MT).unwrap();
    let q = QubitPair::default();
    assert_eq!(transition_frequency(&levels, q.down, q.up).unwrap(), transition_frequency(&levels, q.up, q.down).unwrap());
    assert!(transition_frequency(&levels, q.up, q.up).is_err());
}

#[test]
fn clock_point_slope_changes_sign_once() {
    let a = atom();
    let q = QubitPair::default();
    let b = field_independent_point(&a, q.down, q.up, (5.0 * MT, 40.0 * MT)).unwrap();
    let before = transition_slope(&a, q.down, q.up, b - 1.0 * MT).unwrap();
    let after = transition_slope(&a, q.down, q.up, b + 1.0 * MT).unwrap();
    assert!(before.signum() != after.signum());
    // dense finite-difference scan of the oracle frequency
    let oracle = common::mg25();
    let fields: Vec<f64> = (0..=350).map(|k| (5.0 + 0.1 * k as f64) * MT).collect();
    let f: Vec<f64> = fields.iter().map(|&x| common::clock_frequency_hz(&oracle, x, 1.0)).collect();
    let slopes: Vec<f64> = f.windows(2).map(|w| w[1] - w[0]).collect();
    let changes: Vec<usize> = (1..slopes.len()).filter(|&k| slopes[k].signum() != slopes[k - 1].signum()).collect();
    assert_eq!(changes.len(), 1);
    let bracket = (fields[changes[0] - 1], fields[changes[0] + 1]);
    assert!(b >= bracket.0 && b <= bracket.1, "{b} outside {bracket:?}");
    assert!(matches!(
        field_independent_point(&a, q.down, q.up, (25.0 * MT, 40.0 * MT)),
        Err(HyperfineError::NoStationaryPoint { .. })
    ));
}

#[test]
fn rabi_rate_matches_oracle_matrix_element() {
    let field = 21.3 * MT;
    let levels = diagonalize(&atom(), field).unwrap();
    let q = QubitPair::default();
    let b_par = 2.5 * UT;
    let ours = rabi_rate(&levels, q.down, q.up, C::new(b_par, 0.0), C::new(0.0, 0.0)).unwrap();

    // ⟨a|g_J J_z + g_I I_z|b⟩ between the two m_F = 1 oracle eigenvectors
    let o = common::mg25();
    let (iz, _, _) = common::spin_matrices(o.i);
    let (jz, _, _) = common::spin_matrices(o.j);
    let mut mz = common::zeros(12);
    common::add_scaled(&mut mz, &common::kron(&common::identity(6), &jz), o.g_j);
    common::add_scaled(&mut mz, &common::kron(&iz, &common::identity(2)), o.g_i);
    let mut h = common::zeros(12);
    let (ix, _, iiy) = {
        let (a, b, c) = common::spin_matrices(o.i);
        (b, a, c)
    };
    let (_, jx, ijy) = common::spin_matrices(o.j);
    common::add_scaled(&mut h, &common::kron(&iz, &jz), o.a_hz);
    common::add_scaled(&mut h, &common::kron(&ix, &jx), o.a_hz);
    common::add_scaled(&mut h, &common::kron(&iiy, &ijy), -o.a_hz);
    common::add_scaled(&mut h, &mz, common::MU_B_HZ_PER_T * field);
    let fz = {
        let mut f = common::kron(&iz, &common::identity(2));
        common::add_scaled(&mut f, &common::kron(&common::identity(6), &jz), 1.0);
        f
    };
    let (_, vecs) = common::jacobi_eigen(h);
    let col = |k: usize| -> Vec<f64> { (0..12).map(|r| vecs[r][k]).collect() };
    let expect = |m: &common::Mat, u: &[f64], v: &[f64]| -> f64 {
        (0..12).map(|r| u[r] * (0..12).map(|c| m[r][c] * v[c]).sum::<f64>()).sum()
    };
    let pair: Vec<Vec<f64>> = (0..12).map(col).filter(|v| (expect(&fz, v, v) - 1.0).abs() < 1e-6).collect();
    assert_eq!(pair.len(), 2);
    let element = expect(&mz, &pair[0], &pair[1]).abs();
    let oracle = TAU * common::MU_B_HZ_PER_T * element * b_par;
    assert!((ours - oracle).abs() < 1e-9 * oracle, "{ours} vs {oracle}");

    // homogeneity over three decades
    for s in [1e-3, 1e-2, 1e-1, 1.0] {
        let r = rabi_rate(&levels, q.down, q.up, C::new(b_par * s, 0.0), C::new(0.0, 0.0)).unwrap();
        assert!((r - ours * s).abs() < 1e-12 * ours);
    }
    assert_eq!(rabi_rate(&levels, q.down, q.up, C::new(0.0, 0.0), C::new(0.0, 0.0)).unwrap(), 0.0);
    // |Δm_F| = 2 is forbidden
    let forbidden = rabi_rate(&levels, l(3.0, 3.0), l(3.0, 1.0), C::new(1e-6, 0.0), C::new(1e-6, 0.0)).unwrap();
    assert!(forbidden < 1e-9 * ours);
}

#[test]
fn ac_zeeman_scaling_and_sign() {
    let levels = diagonalize(&atom(), 21.3 * MT).unwrap();
    let q = QubitPair::default();
    let base = ac_zeeman_coefficients(&levels, q.down, q.up, -mhz(3.0)).unwrap();
    for s in [1e-3, 1e-2, 1e-1, 1.0] {
        let b = C::new(10.0 * UT * s, 0.0);
        let shift = base.shift(b, C::new(5.0 * UT * s, 0.0));
        let reference = base.shift(C::new(10.0 * UT, 0.0), C::new(5.0 * UT, 0.0));
        assert!((shift - reference * s * s).abs() < 1e-12 * reference.abs());
    }
    // near-resonant regime: c_par ∝ 1/Δ, odd in Δ
    let small = ac_zeeman_coefficients(&levels, q.down, q.up, mhz(0.3)).unwrap();
    let large = ac_zeeman_coefficients(&levels, q.down, q.up, mhz(3.0)).unwrap();
    let neg = ac_zeeman_coefficients(&levels, q.down, q.up, -mhz(3.0)).unwrap();
    assert!(large.c_parallel.signum() != neg.c_parallel.signum());
    let ratio = small.c_parallel / large.c_parallel;
    assert!((ratio - 10.0).abs() < 0.1, "ratio {ratio}");
}

#[test]
fn micromotion_sideband_shift_order_of_magnitude() {
    let levels = diagonalize(&atom(), 21.3 * MT).unwrap();
    let q = QubitPair::default();
    let c = ac_zeeman_coefficients(&levels, q.down, q.up, -mhz(71.6)).unwrap();
    let shift = (c.shift(C::new(19.0 * UT, 0.0), C::new(0.0, 0.0)) - c.shift(C::new(7.0 * UT, 0.0), C::new(0.0, 0.0))).abs();
    let hz = shift / TAU;
    assert!(hz > 430.0 / 3.0 && hz < 430.0 * 3.0, "{hz} Hz");
}

#[test]
fn resonant_intermediate_state_is_rejected() {
    let levels = diagonalize(&atom(), 21.3 * MT).unwrap();
    let q = QubitPair::default();
    // drive tuned onto |3,1> <-> |2,2>
    let target = transition_frequency(&levels, l(3.0, 1.0), l(2.0, 2.0)).unwrap();
    let omega_q = transition_frequency(&levels, q.down, q.up).unwrap();
    assert!(matches!(
        ac_zeeman_coefficients(&levels, q.down, q.up, target - omega_q),
        Err(HyperfineError::ResonantIntermediateState { .. })
    ));
}
