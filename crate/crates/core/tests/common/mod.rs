#![allow(dead_code)]

use auxbound::linalg::CMat;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_complex(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
    CMat::from_fn(r, c, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

pub fn random_real(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

/// Largest singular value by power iteration on `M^H M`.
pub fn power_iteration_norm(m: &CMat) -> f64 {
    let mhm = m.adjoint() * m;
    let n = mhm.nrows();
    let mut x = nalgebra::DVector::from_fn(n, |i, _| Complex64::new(1.0 + i as f64 * 0.37, 0.1 * i as f64));
    let mut lambda = 0.0;
    for _ in 0..5000 {
        let y = &mhm * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = y.dotc(&x).re / x.norm_squared();
        x = y / Complex64::new(norm, 0.0);
        if (next - lambda).abs() <= 1e-15 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.sqrt()
}

/// Roots of the monic polynomial with coefficients `c[0] + c[1] x + ... + x^n`
/// by Durand-Kerner iteration.
pub fn durand_kerner(c: &[f64]) -> Vec<Complex64> {
    let n = c.len();
    let eval = |z: Complex64| {
        let mut acc = Complex64::new(1.0, 0.0);
        for k in (0..n).rev() {
            acc = acc * z + c[k];
        }
        acc
    };
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32)).collect();
    for _ in 0..2000 {
        let prev = roots.clone();
        for i in 0..n {
            let mut den = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    den *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / den;
            roots[i] -= step;
        }
        let change: f64 = roots.iter().zip(&prev).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if change < 1e-15 {
            break;
        }
    }
    roots
}

/// Characteristic polynomial coefficients (monic, low order first) by the
/// Faddeev-LeVerrier recursion.
pub fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![0.0; n];
    let mut m = DMatrix::<f64>::zeros(n, n);
    let id = DMatrix::<f64>::identity(n, n);
    let mut c_prev = 1.0;
    for k in 1..=n {
        m = a * &m + &id * c_prev;
        let c = -(a * &m).trace() / k as f64;
        coeffs[n - k] = c;
        c_prev = c;
    }
    coeffs
}

/// Classical RK4 with a fixed step.
pub fn rk4<F: Fn(f64, &[f64], &mut [f64])>(f: F, y0: &[f64], t0: f64, t1: f64, steps: usize) -> Vec<(f64, Vec<f64>)> {
    let n = y0.len();
    let h = (t1 - t0) / steps as f64;
    let mut y = y0.to_vec();
    let mut out = vec![(t0, y.clone())];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        f(t, &y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        f(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        f(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        f(t + h, &tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push((t0 + (s + 1) as f64 * h, y.clone()));
    }
    out
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// `x' = [[0, 1], [t - 1, 0]] x` with a small cubic `-c x1^3` in the second
/// equation. The eigenvalues `±sqrt(t - 1)` coalesce defectively at `t = 1`.
pub fn turning_point_system(c: f64) -> auxbound::systems::SystemSpec {
    use auxbound::systems::*;
    use auxbound::transform_chain::{Coefficient, Monomial};
    SystemSpec {
        b: MatrixFunction {
            constant: vec![vec![0.0, 1.0], vec![-1.0, 0.0]],
            linear: Some(vec![vec![0.0, 0.0], vec![1.0, 0.0]]),
            harmonics: vec![],
        },
        nonlinearity: monomial_bound(vec![Monomial { component: 1, coefficient: Coefficient::Constant(-c), exponents: vec![3, 0] }])
            .unwrap(),
        forcing: Forcing::none(),
        t0: 0.0,
        benchmark: None,
    }
}

/// Eigen path and stage-0 split of the turning-point system on `[0, 2]`.
pub fn turning_point_paths(h: f64) -> (auxbound::linalg::MatrixPath, auxbound::linalg::MatrixPath, auxbound::linalg::EigenPath) {
    use auxbound::linalg::*;
    let sys = turning_point_system(0.0);
    let grid = auxbound::path::uniform_grid(0.0, 2.0, h);
    let a0 = MatrixPath::from_fn(grid.clone(), |t| to_complex(&sys.b_at(t))).unwrap();
    let g0 = MatrixPath::from_fn(grid, |_| CMat::zeros(2, 2)).unwrap();
    let eig = track_eigens(&a0, &TrackOptions { on_ambiguous: AmbiguityPolicy::Flag, ..Default::default() }).unwrap();
    (a0, g0, eig)
}
