mod common;

use auxbound::dichotomy::*;
use auxbound::linalg::to_complex;
use auxbound::path::uniform_grid;
use auxbound::systems::{preset, MatrixFunction, SystemSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;
use std::f64::consts::PI;

fn a_mat() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.3, -2.0])
}

fn m_mat() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.2, -0.7, 0.4, 0.1])
}

#[test]
fn constant_b_any_window() {
    let grid = uniform_grid(0.0, 5.0, 0.05);
    for delta in [0.0, 0.3, 2.0, 7.5] {
        let b = |_t: f64| a_mat();
        let (a0, g0) = moving_average_split(&b, &DichotomyConfig::scalar(delta, 0.01), &grid).unwrap();
        for (a, g) in a0.values().iter().zip(g0.values()) {
            assert!((a - to_complex(&a_mat())).norm() < 1e-13);
            assert!(g.norm() < 1e-13);
        }
    }
}

#[test]
fn sinusoid_averages_out_over_its_period() {
    let p = 2.0;
    let b = |t: f64| a_mat() + m_mat() * (2.0 * PI * t / p).sin();
    let grid = uniform_grid(0.0, 6.0, 0.05);
    let (a0, g0) = moving_average_split(&b, &DichotomyConfig::scalar(p, 0.01), &grid).unwrap();
    for ((t, a), g) in grid.iter().zip(a0.values()).zip(g0.values()) {
        assert!((a - to_complex(&a_mat())).norm() < 1e-10, "t = {t}");
        let sine = to_complex(&(m_mat() * (2.0 * PI * t / p).sin()));
        assert!((g - sine).norm() < 1e-10);
    }
}

#[test]
fn zero_window_is_identity_split() {
    let b = |t: f64| a_mat() + m_mat() * t.sin();
    let grid = uniform_grid(0.0, 3.0, 0.1);
    let (a0, g0) = moving_average_split(&b, &DichotomyConfig::scalar(0.0, 0.01), &grid).unwrap();
    for ((t, a), g) in grid.iter().zip(a0.values()).zip(g0.values()) {
        assert_eq!(a, &to_complex(&b(*t)));
        assert!(g.iter().all(|z| z.norm() == 0.0));
    }
}

#[test]
fn phi_of_constant_path_is_exact() {
    let grid = uniform_grid(0.0, 10.0, 0.1);
    let n = grid.len();
    let e = phi_exponents(&grid, &vec![-0.25; n], &vec![0.5; n], &vec![0.125; n], 10.0, 1e-9).unwrap();
    assert_eq!((e.phi1, e.phi2), (0.25, -0.125));
    assert!(e.converged);
}

#[test]
fn phi_of_oscillating_alpha() {
    let horizon = 200.0 * PI;
    let grid = uniform_grid(0.0, horizon, 0.01);
    let alpha: Vec<f64> = grid.iter().map(|t| -1.0 + t.sin()).collect();
    let zero = vec![0.0; grid.len()];
    let e = phi_exponents(&grid, &alpha, &zero, &zero, horizon, 1e-3).unwrap();
    assert!((e.phi1 + 1.0).abs() < 1e-6 && (e.phi2 + 1.0).abs() < 1e-6);
}

fn scan_opts() -> ScanOptions {
    ScanOptions { grid_step: 0.02, ..Default::default() }
}

#[test]
fn fig1f_hat_exponent_never_exceeds_full() {
    let sys = preset("fig1f").unwrap().system().unwrap();
    let table = window_scan(&sys, &[0.5, 1.0, 2.0, 4.0, 8.0, 12.0], 200.0, 1, &scan_opts()).unwrap();
    for r in &table.rows {
        assert!(r.phi2 <= r.phi1 + 1e-12, "{r:?}");
    }
}

#[test]
fn constant_system_scan_is_flat() {
    let sys = SystemSpec::linear(MatrixFunction::constant(&a_mat()));
    let deltas = [0.0, 1.0, 2.5, 5.0];
    let table = window_scan(&sys, &deltas, 50.0, 1, &scan_opts()).unwrap();
    let first = &table.rows[0];
    for r in &table.rows {
        assert!((r.phi1 - first.phi1).abs() < 1e-9 && (r.phi2 - first.phi2).abs() < 1e-9);
    }
    assert_eq!(table.argmin_phi2, Some(0));
}

#[test]
fn fig1c_curves_flatten_for_long_windows() {
    let sys = preset("fig1c").unwrap().system().unwrap();
    let deltas = [1.0, 10.0, 14.0, 20.0, 30.0];
    let table = window_scan(&sys, &deltas, 400.0, 1, &scan_opts()).unwrap();
    let tail: Vec<f64> = table.rows[1..].iter().map(|r| r.phi2).collect();
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    assert!((hi - lo) / lo.abs() < 0.03, "{tail:?}");
    assert!(table.rows[0].phi2 > hi);
}

#[test]
fn fig1b_has_interior_optimum() {
    let sys = preset("fig1b").unwrap().system().unwrap();
    let deltas = [0.5, 2.0, 4.0, 8.0, 14.0, 30.0];
    let table = window_scan(&sys, &deltas, 400.0, 1, &scan_opts()).unwrap();
    let i = table.argmin_phi2.unwrap();
    assert!(i > 0 && i + 1 < deltas.len(), "argmin at row {i}");
}

#[test]
fn windowed_average_approaches_mean_matrix() {
    let p = 2.0 * PI / 3.0;
    let b = |t: f64| a_mat() + m_mat() * (3.0 * t).sin() + m_mat().transpose() * (1.5 * t).cos() * 0.5;
    let grid = uniform_grid(0.0, 40.0, 0.1);
    let mid = grid.len() / 2;
    let mut last = f64::INFINITY;
    for k in [1.0, 3.0, 9.0] {
        // windows that are whole multiples of the fast period but not the slow one
        let delta = k * p + 0.3;
        let (a0, _) = moving_average_split(&b, &DichotomyConfig::scalar(delta, 0.01), &grid).unwrap();
        let err = (&a0.values()[mid] - to_complex(&a_mat())).norm();
        assert!(err < last, "{err} after {last}");
        last = err;
    }
}

#[test]
fn scans_are_deterministic() {
    let sys = preset("fig3b").unwrap().system().unwrap();
    let a = window_scan(&sys, &[1.0, 3.0], 60.0, 1, &scan_opts()).unwrap();
    let b = window_scan(&sys, &[1.0, 3.0], 60.0, 1, &scan_opts()).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn split_reconstructs_b(delta in 0.0f64..4.0, w in 0.1f64..5.0, amp in -1.0f64..1.0) {
        let b = |t: f64| a_mat() + m_mat() * (amp * (w * t).sin());
        let grid = uniform_grid(0.0, 4.0, 0.1);
        let (a0, g0) = moving_average_split(&b, &DichotomyConfig::scalar(delta, 0.01), &grid).unwrap();
        for ((t, a), g) in grid.iter().zip(a0.values()).zip(g0.values()) {
            let bt = to_complex(&b(*t));
            prop_assert!((a + g - &bt).norm() <= 4.0 * f64::EPSILON * (1.0 + bt.norm()));
        }
    }
}
