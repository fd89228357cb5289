mod common;

use auxbound::aux_ode::*;
use auxbound::error::Error;
use auxbound::ode::OdeOptions;
use auxbound::path::{trapezoid, uniform_grid};
use auxbound::pipeline::{analyze, AnalysisConfig};
use auxbound::systems::{preset, vanderpol_like, BenchmarkParams, Forcing, MatrixFunction, SystemSpec};
use auxbound::transform_chain::PolyBound;
use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn scalar_aux(grid: Vec<f64>, lin: impl Fn(f64) -> f64, cubic: f64) -> AuxEquation {
    let n = grid.len();
    let alpha: Vec<f64> = grid.iter().map(|&t| lin(t)).collect();
    let bound = if cubic > 0.0 {
        PolyBound::new(grid.clone(), vec![vec![cubic; n]], vec![3]).unwrap()
    } else {
        PolyBound::zero(grid.clone())
    };
    AuxEquation::new(Variant::Hom34, grid, alpha, vec![0.0; n], bound, vec![0.0; n], 0.0).unwrap()
}

#[test]
fn decay_is_exponential() {
    let aux = scalar_aux(uniform_grid(0.0, 10.0, 0.1), |_| -1.0, 0.0);
    let tr = integrate_aux(&aux, 1.0, (0.0, 10.0), &OdeOptions::default()).unwrap();
    for (t, z) in tr.t.iter().zip(&tr.z) {
        assert!((z - (-t).exp()).abs() < 1e-8);
    }
}

#[test]
fn cubic_matches_bernoulli_solution() {
    let aux = scalar_aux(uniform_grid(0.0, 10.0, 0.1), |_| -1.0, 1.0);
    let z0: f64 = 0.5;
    let tr = integrate_aux(&aux, z0, (0.0, 10.0), &OdeOptions::default()).unwrap();
    for (t, z) in tr.t.iter().zip(&tr.z) {
        let exact = (1.0 + (z0.powi(-2) - 1.0) * (2.0 * t).exp()).powf(-0.5);
        assert!((z - exact).abs() < 1e-7, "t = {t}");
    }
}

#[test]
fn growth_reports_divergence_time() {
    let aux = scalar_aux(uniform_grid(0.0, 20.0, 0.1), |_| 1.0, 0.0);
    match integrate_aux(&aux, 1.0, (0.0, 20.0), &OdeOptions::default()) {
        Err(Error::Diverged { t }) => assert!((t - 1e6f64.ln()).abs() < 1e-3, "{t}"),
        other => panic!("expected divergence, got {other:?}"),
    }
}

fn diag_system() -> SystemSpec {
    SystemSpec::linear(MatrixFunction::constant(&DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0])))
}

#[test]
fn diagonal_system_norm_is_analytic() {
    let grid = uniform_grid(0.0, 10.0, 0.05);
    let full = full_integrate(&diag_system(), &[0.6, 0.8], &grid, &OdeOptions::default()).unwrap();
    for (t, n) in full.t.iter().zip(&full.norm) {
        let exact = ((0.6 * (-t).exp()).powi(2) + (0.8 * (-2.0 * t).exp()).powi(2)).sqrt();
        assert!((n - exact).abs() < 1e-8);
    }
}

#[test]
fn linear_benchmark_matches_fixed_step_oracle() {
    let p = BenchmarkParams { a11: 0.3, a12: 0.2, a21: 0.4, a22: 0.1, ..Default::default() };
    let sys = vanderpol_like(&p).unwrap().homogeneous();
    let lin = SystemSpec::linear(sys.b.clone());
    let x0 = [0.1, -0.2, 0.3, 0.05];
    let out = uniform_grid(0.0, 20.0, 0.1);
    let full = full_integrate(&lin, &x0, &out, &OdeOptions::default()).unwrap();
    // RK4 on a step ten times finer than the output spacing
    let rk = rk4(|t, x, dx| lin.rhs(t, x, dx), &x0, 0.0, 20.0, 200 * 10 * 10);
    for (k, x) in full.x.iter().enumerate() {
        let (t, y) = &rk[k * 100];
        assert!((t - full.t[k]).abs() < 1e-9);
        for (a, b) in x.iter().zip(y) {
            assert!((a - b).abs() < 1e-8, "t = {t}");
        }
    }
}

#[test]
fn zero_start_stays_zero() {
    let sys = preset("fig3b").unwrap().system().unwrap();
    let out = uniform_grid(0.0, 5.0, 0.1);
    let full = full_integrate(&sys, &[0.0; 4], &out, &OdeOptions::default()).unwrap();
    assert!(full.norm.iter().all(|&n| n == 0.0));
}

#[test]
fn lti_bound_is_tight() {
    let sys = diag_system();
    let an = analyze(&sys, &AnalysisConfig { delta: 1.0, horizon: 10.0, ..Default::default() }).unwrap();
    let aux = an.aux(&sys, Variant::Hat33).unwrap();
    let z0 = an.z0(&[1.0, 0.0]);
    assert!((z0 - 1.0).abs() < 1e-15);
    let tr = integrate_aux(&aux, z0, (0.0, 10.0), &OdeOptions::default()).unwrap();
    let b = bound_path(an.stage(), &tr).unwrap();
    let full = full_integrate(&sys, &[1.0, 0.0], &tr.t, &OdeOptions::default()).unwrap();
    for (x, bb) in full.norm.iter().zip(&b) {
        assert!((x - bb).abs() < 1e-8);
    }
    // zero initial state: both paths vanish
    let tr0 = integrate_aux(&aux, 0.0, (0.0, 10.0), &OdeOptions::default()).unwrap();
    let m = check_bound(&tr0.t, &vec![0.0; tr0.t.len()], &tr0.t, &bound_path(an.stage(), &tr0).unwrap(), 1e-6).unwrap();
    assert_eq!(m.min_margin, 0.0);
}

#[test]
fn hat_rhs_follows_norm_ordering_on_fig3b() {
    let p = preset("fig3b").unwrap();
    let sys = p.system().unwrap();
    let an = analyze(&sys, &AnalysisConfig { delta: p.delta, horizon: 50.0, ..Default::default() }).unwrap();
    let hat = an.aux(&sys, Variant::Hat33).unwrap();
    let full = an.aux(&sys, Variant::Full32).unwrap();
    let st = an.stage();
    let mut r = rng(3);
    for _ in 0..500 {
        let m = r.gen_range(0..st.grid.len());
        let z = r.gen_range(0.0..2.0);
        let (t, gap) = (st.grid[m], st.g_norm[m] - st.g_hat_norm[m]);
        let d = full.rhs(t, z) - hat.rhs(t, z);
        assert!((d - gap * z).abs() <= 1e-12 * (1.0 + z), "t = {t}");
    }
    // the averaged exponents keep their order even though the pointwise norms do not
    let hat_mean = trapezoid(&st.grid, &hat.linear_coeff());
    let full_mean = trapezoid(&st.grid, &full.linear_coeff());
    assert!(hat_mean <= full_mean + 1e-12);
}

#[test]
fn forced_variant_rejected_when_homogeneous() {
    let grid = uniform_grid(0.0, 1.0, 0.5);
    let r = AuxEquation::new(Variant::Hom34, grid.clone(), vec![0.0; 3], vec![0.0; 3], PolyBound::zero(grid), vec![0.5; 3], 0.5);
    assert!(matches!(r, Err(Error::InvalidConfig(_))));
}

#[test]
fn trivial_stage_gives_alpha_times_z() {
    let sys = diag_system();
    let an = analyze(&sys, &AnalysisConfig { delta: 0.0, horizon: 2.0, ..Default::default() }).unwrap();
    let aux = build_aux(an.stage(), an.bound.clone(), &Forcing::none(), Variant::Hom34).unwrap();
    for (t, z) in [(0.3, 1.0), (1.7, 0.25)] {
        assert!((aux.rhs(t, z) + z).abs() < 1e-12);
    }
}

#[test]
fn linear_solution_constant_rate() {
    let grid = uniform_grid(0.0, 20.0, 0.01);
    let n = grid.len();
    let lin = linear_solution(&grid, &vec![-1.0; n], &vec![0.0; n], 0.0).unwrap();
    assert_eq!(lin.zh_sup, 1.0);
    for (t, z) in grid.iter().zip(&lin.zh) {
        assert!((z - (-t).exp()).abs() < 1e-8);
    }
    let forced = linear_solution(&grid, &vec![-1.0; n], &vec![1.0; n], 1.0).unwrap();
    for (t, z) in grid.iter().zip(&forced.zf) {
        assert!((z - (1.0 - (-t).exp())).abs() < 1e-8);
    }
    assert!((forced.zf_sup - 1.0).abs() < 1e-8);
}

#[test]
fn linear_solution_matches_ode_for_oscillating_rate() {
    let grid = uniform_grid(0.0, 100.0, 0.01);
    let mu: Vec<f64> = grid.iter().map(|t| -1.0 + 0.5 * t.sin()).collect();
    let n = grid.len();
    let lin = linear_solution(&grid, &mu, &vec![1.0; n], 1.0).unwrap();
    // the same equations integrated with the exact rate function
    let opts = OdeOptions { rtol: 1e-12, atol: 1e-14, ..Default::default() };
    let sol = auxbound::ode::solve(
        |t, z, dz| {
            let m = -1.0 + 0.5 * t.sin();
            dz[0] = m * z[0];
            dz[1] = m * z[1] + 1.0;
        },
        &[1.0, 0.0],
        &grid,
        &opts,
    )
    .unwrap();
    for (k, y) in sol.y.iter().enumerate() {
        assert!(rel_err(lin.zh[k], y[0]) < 1e-6, "Z_h at t = {}", grid[k]);
        if grid[k] > 0.5 {
            assert!(rel_err(lin.zf[k], y[1]) < 1e-6, "Z_F at t = {}", grid[k]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trajectories_are_ordered_and_nonnegative(a in 0.0f64..0.3, b in 0.0f64..0.3, w in 0.5f64..3.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let aux = scalar_aux(uniform_grid(0.0, 20.0, 0.05), |t| -0.5 + 0.8 * (w * t).sin(), 1.0);
        let opts = OdeOptions::default();
        let x = integrate_aux_partial(&aux, lo, (0.0, 20.0), &opts).unwrap();
        let y = integrate_aux_partial(&aux, hi, (0.0, 20.0), &opts).unwrap();
        for (p, q) in x.z.iter().zip(&y.z) {
            prop_assert!(*p >= 0.0);
            prop_assert!(*p <= q + 1e-9);
        }
    }
}
