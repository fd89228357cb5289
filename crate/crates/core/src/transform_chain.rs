//! Lyapunov-transform chain: each stage diagonalizes the current slow matrix
//! along time and collects what is left over into a residual matrix `G`.
//! Also hosts the polynomial norm bounds of the nonlinearity.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::linalg::{
    inverse, norm2, path_derivative, track_eigens, AmbiguityPolicy, CMat, EigenPath, MatrixPath,
    TrackOptions,
};
use crate::path::interp;

/// Time-dependent scalar coefficient of a monomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Coefficient {
    Constant(f64),
    /// `offset + amplitude * sin(omega * t + phase)`
    Sinusoid {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl Coefficient {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Coefficient::Constant(c) => c,
            Coefficient::Sinusoid { offset, amplitude, omega, phase } => {
                offset + amplitude * (omega * t + phase).sin()
            }
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            Coefficient::Constant(c) => c.is_finite(),
            Coefficient::Sinusoid { offset, amplitude, omega, phase } => {
                [offset, amplitude, omega, phase].iter().all(|v| v.is_finite())
            }
        }
    }
}

/// Term `coefficient(t) * prod_m x_m^{exponents[m]}` added to component `component`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub component: usize,
    pub coefficient: Coefficient,
    pub exponents: Vec<u32>,
}

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let mut p = self.coefficient.value(t);
        for (xm, &e) in x.iter().zip(&self.exponents) {
            if e > 0 {
                p *= xm.powi(e as i32);
            }
        }
        p
    }
}

/// Polynomial nonlinearity together with the data needed to bound its norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyBoundSpec {
    pub terms: Vec<Monomial>,
    /// Whether the bound is valid on the whole state space.
    #[serde(default = "yes")]
    pub whole_space: bool,
}

fn yes() -> bool {
    true
}

impl Default for PolyBoundSpec {
    fn default() -> Self {
        Self { terms: Vec::new(), whole_space: true }
    }
}

impl PolyBoundSpec {
    pub fn validate(&self) -> Result<()> {
        for t in &self.terms {
            if t.degree() == 0 {
                return invalid_config("nonlinearity terms need degree >= 1");
            }
            if !t.coefficient.is_finite() {
                return invalid_config("nonlinearity coefficients must be finite");
            }
        }
        Ok(())
    }

    /// Adds `f(t, x)` to `out`.
    pub fn accumulate(&self, t: f64, x: &[f64], out: &mut [f64]) {
        for term in &self.terms {
            out[term.component] += term.eval(t, x);
        }
    }

    /// Evaluates `f(t, x)` for a complex state (used by dominance checks in
    /// transformed coordinates).
    pub fn eval_complex(&self, t: f64, x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for term in &self.terms {
            let mut p = Complex64::new(term.coefficient.value(t), 0.0);
            for (xm, &e) in x.iter().zip(&term.exponents) {
                if e > 0 {
                    p *= xm.powu(e);
                }
            }
            out[term.component] += p;
        }
        out
    }
}

/// `L(t, z) = sum_j c_j(t) z^{p_j}` with coefficient paths on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyBound {
    pub grid: Vec<f64>,
    pub coeffs: Vec<Vec<f64>>,
    pub degrees: Vec<u32>,
}

impl PolyBound {
    pub fn zero(grid: Vec<f64>) -> Self {
        Self { grid, coeffs: Vec::new(), degrees: Vec::new() }
    }

    /// Builds a bound from explicit coefficient paths.
    pub fn new(grid: Vec<f64>, coeffs: Vec<Vec<f64>>, degrees: Vec<u32>) -> Result<Self> {
        if coeffs.len() != degrees.len() {
            return invalid_input("one degree per coefficient path");
        }
        for c in &coeffs {
            if c.len() != grid.len() {
                return invalid_input("coefficient path length differs from the grid");
            }
            if c.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return invalid_input("bound coefficients must be finite and nonnegative");
            }
        }
        if degrees.contains(&0) {
            return invalid_input("bound terms need degree >= 1");
        }
        Ok(Self { grid, coeffs, degrees })
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.iter().all(|&v| v == 0.0))
    }

    pub fn eval(&self, t: f64, z: f64) -> f64 {
        self.coeffs
            .iter()
            .zip(&self.degrees)
            .map(|(c, &d)| interp(&self.grid, c, t) * z.powi(d as i32))
            .sum()
    }

    /// Value at grid index `m`.
    pub fn eval_at(&self, m: usize, z: f64) -> f64 {
        self.coeffs
            .iter()
            .zip(&self.degrees)
            .map(|(c, &d)| c[m] * z.powi(d as i32))
            .sum()
    }
}

/// Slope path `l(t)` with `L(t, z) <= l(t) z` on `[0, z_hat]`.
pub fn linearize_bound(bound: &PolyBound, z_hat: f64) -> Result<Vec<f64>> {
    if !(z_hat >= 0.0 && z_hat.is_finite()) {
        return invalid_input("z_hat must be finite and nonnegative");
    }
    let mut l = vec![0.0; bound.grid.len()];
    for (c, &d) in bound.coeffs.iter().zip(&bound.degrees) {
        let w = z_hat.powi(d as i32 - 1);
        for (lm, cm) in l.iter_mut().zip(c) {
            *lm += cm * w;
        }
    }
    Ok(l)
}

/// Minimizes `eta + max_i |alpha_i - eta|`; the value is `max(alpha)` and every
/// `eta <= (max + min) / 2` attains it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaReduction {
    /// Representative minimizer (midpoint of the extreme exponents).
    pub eta_star: f64,
    pub value: f64,
    /// Upper end of the minimizing half-line `(-inf, upper]`.
    pub upper: f64,
}

pub fn eta_reduction(alpha: &[f64]) -> Result<EtaReduction> {
    if alpha.is_empty() || alpha.iter().any(|a| !a.is_finite()) {
        return invalid_input("alpha must be a non-empty finite vector");
    }
    let max = alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = alpha.iter().cloned().fold(f64::INFINITY, f64::min);
    let mid = 0.5 * (max + min);
    Ok(EtaReduction { eta_star: mid, value: max, upper: mid })
}

/// Zeroes the imaginary part of the diagonal.
pub fn hat_g(g: &MatrixPath) -> MatrixPath {
    g.map(hat)
}

fn hat(m: &CMat) -> CMat {
    let mut out = m.clone();
    for i in 0..out.nrows().min(out.ncols()) {
        out[(i, i)].im = 0.0;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageOptions {
    pub gap_rel: f64,
    pub cond_max: f64,
    pub ambiguity_tol: f64,
}

impl Default for StageOptions {
    fn default() -> Self {
        let t = TrackOptions::default();
        Self { gap_rel: t.gap_rel, cond_max: t.cond_max, ambiguity_tol: t.ambiguity_tol }
    }
}

/// Transform data of one stage of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStage {
    pub k: usize,
    pub grid: Vec<f64>,
    pub eig: EigenPath,
    /// Diagonal entries of `Lambda_k` per sample.
    pub lambda: Vec<Vec<Complex64>>,
    pub alpha_max: Vec<f64>,
    pub v: MatrixPath,
    pub v_dot: MatrixPath,
    pub v_inv: MatrixPath,
    pub v_cum: MatrixPath,
    pub v_cum_inv: MatrixPath,
    pub v_cum_norm: Vec<f64>,
    pub v_cum_inv_norm: Vec<f64>,
    pub g: MatrixPath,
    pub g_hat: MatrixPath,
    pub g_norm: Vec<f64>,
    pub g_hat_norm: Vec<f64>,
    /// Slow matrix handed to the next stage: `Lambda_k - v^-1 v'`.
    pub a_next: MatrixPath,
    /// Fast matrix handed to the next stage: `v^-1 g_{k-1} v`.
    pub g_next: MatrixPath,
}

/// Builds stage `k` from the previous slow and fast matrices. In the new
/// coordinates `x = V y` the linear part reads `Lambda + G` with
/// `G = -v^-1 v' + v^-1 g_prev v`.
pub fn build_stage(
    a_prev: &MatrixPath,
    g_prev: &MatrixPath,
    k: usize,
    v_cum_prev: Option<&MatrixPath>,
    opts: &StageOptions,
) -> Result<ChainStage> {
    if k == 0 {
        return invalid_input("stage index starts at 1");
    }
    if a_prev.grid() != g_prev.grid() || a_prev.dim() != g_prev.dim() {
        return invalid_input("slow and fast paths must share grid and dimension");
    }
    if let Some(p) = v_cum_prev {
        if p.grid() != a_prev.grid() {
            return invalid_input("cumulative transform must share the grid");
        }
    }
    let track = TrackOptions {
        gap_rel: opts.gap_rel,
        cond_max: opts.cond_max,
        ambiguity_tol: opts.ambiguity_tol,
        on_ambiguous: AmbiguityPolicy::Flag,
    };
    let eig = track_eigens(a_prev, &track)?;
    let grid = a_prev.grid().to_vec();
    check_regular(&eig, opts)?;

    let v = MatrixPath::new(grid.clone(), eig.vectors.clone())?;
    let v_dot = path_derivative(&v)?;
    let n_s = grid.len();
    let mut v_inv = Vec::with_capacity(n_s);
    let mut g = Vec::with_capacity(n_s);
    let mut a_next = Vec::with_capacity(n_s);
    let mut g_next = Vec::with_capacity(n_s);
    let mut v_cum = Vec::with_capacity(n_s);
    let mut v_cum_inv = Vec::with_capacity(n_s);
    for m in 0..n_s {
        let vm = &v.values()[m];
        let vi = inverse(vm)?;
        let drift = &vi * &v_dot.values()[m];
        let fast = &vi * &g_prev.values()[m] * vm;
        let lam = CMat::from_diagonal(&nalgebra::DVector::from_vec(eig.lambdas[m].clone()));
        g.push(&fast - &drift);
        a_next.push(&lam - &drift);
        g_next.push(fast);
        let vc = match v_cum_prev {
            Some(p) => &p.values()[m] * vm,
            None => vm.clone(),
        };
        v_cum_inv.push(inverse(&vc)?);
        v_cum.push(vc);
        v_inv.push(vi);
    }
    let g = MatrixPath::new(grid.clone(), g)?;
    let g_hat = hat_g(&g);
    let v_cum = MatrixPath::new(grid.clone(), v_cum)?;
    let v_cum_inv = MatrixPath::new(grid.clone(), v_cum_inv)?;
    Ok(ChainStage {
        k,
        alpha_max: eig.alpha_max(),
        lambda: eig.lambdas.clone(),
        g_norm: g.norms(),
        g_hat_norm: g_hat.norms(),
        v_cum_norm: v_cum.norms(),
        v_cum_inv_norm: v_cum_inv.norms(),
        v_inv: MatrixPath::new(grid.clone(), v_inv)?,
        a_next: MatrixPath::new(grid.clone(), a_next)?,
        g_next: MatrixPath::new(grid.clone(), g_next)?,
        grid,
        eig,
        v,
        v_dot,
        v_cum,
        v_cum_inv,
        g,
        g_hat,
    })
}

/// Fails with the time window of flagged samples when the spectrum is not
/// simple (or matching was ambiguous) somewhere on the grid.
fn check_regular(eig: &EigenPath, opts: &StageOptions) -> Result<()> {
    let flagged = eig.flagged(opts.gap_rel, opts.cond_max);
    let first = flagged.iter().position(|&f| f);
    if let Some(i) = first {
        let j = flagged.iter().rposition(|&f| f).unwrap_or(i);
        return Err(Error::NonSimpleEigenvalues { t_start: eig.grid[i], t_end: eig.grid[j] });
    }
    Ok(())
}

/// Stages `1..=depth` starting from the split `B = a0 + g0`.
pub fn build_chain(
    a0: &MatrixPath,
    g0: &MatrixPath,
    depth: usize,
    opts: &StageOptions,
) -> Result<Vec<ChainStage>> {
    if depth == 0 {
        return invalid_input("chain depth must be at least 1");
    }
    let mut stages: Vec<ChainStage> = Vec::with_capacity(depth);
    for k in 1..=depth {
        let stage = match stages.last() {
            None => build_stage(a0, g0, 1, None, opts)?,
            Some(prev) => build_stage(&prev.a_next, &prev.g_next, k, Some(&prev.v_cum), opts)?,
        };
        stages.push(stage);
    }
    Ok(stages)
}

/// Pushes the polynomial nonlinearity into stage coordinates using
/// `|x_m| <= s_m(t) |y|` with `s_m` the absolute row sums of `V_k(t)`.
pub fn push_nonlinearity(stage: &ChainStage, spec: &PolyBoundSpec) -> Result<PolyBound> {
    if !spec.whole_space {
        return Err(Error::Unsupported(
            "polynomial bounds are only implemented on the whole state space".into(),
        ));
    }
    spec.validate()?;
    let n = stage.v_cum.dim();
    let mut coeffs = Vec::with_capacity(spec.terms.len());
    let mut degrees = Vec::with_capacity(spec.terms.len());
    for term in &spec.terms {
        if term.exponents.len() != n || term.component >= n {
            return invalid_input("monomial does not match the system dimension");
        }
        let mut c = Vec::with_capacity(stage.grid.len());
        for (m, &t) in stage.grid.iter().enumerate() {
            let vc = &stage.v_cum.values()[m];
            let mut prod = stage.v_cum_inv_norm[m] * term.coefficient.value(t).abs();
            for (row, &e) in term.exponents.iter().enumerate() {
                if e > 0 {
                    let s: f64 = vc.row(row).iter().map(|z| z.norm()).sum();
                    prod *= s.powi(e as i32);
                }
            }
            c.push(prod);
        }
        coeffs.push(c);
        degrees.push(term.degree());
    }
    PolyBound::new(stage.grid.clone(), coeffs, degrees)
}

/// Stage paths for plotting: `t, alpha_max, |G|, |G^|, |V^-1|, |V|`.
pub fn stage_rows(stage: &ChainStage) -> Vec<[f64; 6]> {
    (0..stage.grid.len())
        .map(|m| {
            [
                stage.grid[m],
                stage.alpha_max[m],
                stage.g_norm[m],
                stage.g_hat_norm[m],
                stage.v_cum_inv_norm[m],
                stage.v_cum_norm[m],
            ]
        })
        .collect()
}

/// `max_m |v^-1 a v - Lambda| / (1 + |a|)` over the grid.
pub fn similarity_defect(stage: &ChainStage, a_prev: &MatrixPath) -> f64 {
    (0..stage.grid.len())
        .map(|m| {
            let a = &a_prev.values()[m];
            let lam = CMat::from_diagonal(&nalgebra::DVector::from_vec(stage.lambda[m].clone()));
            let d = &stage.v_inv.values()[m] * a * &stage.v.values()[m] - lam;
            norm2(&d) / (1.0 + norm2(a))
        })
        .fold(0.0, f64::max)
}

/// Real matrix path sampled from a callable.
pub fn real_path(grid: &[f64], f: impl Fn(f64) -> DMatrix<f64>) -> Result<MatrixPath> {
    MatrixPath::from_fn(grid.to_vec(), |t| crate::linalg::to_complex(&f(t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::to_complex;
    use crate::path::uniform_grid;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn constant_diagonal_stage_is_trivial() {
        let grid = uniform_grid(0.0, 1.0, 0.1);
        let a = real_path(&grid, |_| DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -3.0])).unwrap();
        let g = real_path(&grid, |_| DMatrix::zeros(2, 2)).unwrap();
        let s = build_stage(&a, &g, 1, None, &StageOptions::default()).unwrap();
        for m in 0..grid.len() {
            assert!((&s.v.values()[m] - CMat::identity(2, 2)).norm() < 1e-14);
            assert!(s.v_dot.values()[m].norm() < 1e-12);
            assert!(s.g_norm[m] < 1e-12);
            assert_eq!(s.alpha_max[m], -1.0);
        }
    }

    #[test]
    fn jordan_block_is_not_simple() {
        let grid = uniform_grid(0.0, 1.0, 0.1);
        let a = real_path(&grid, |_| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])).unwrap();
        let g = real_path(&grid, |_| DMatrix::zeros(2, 2)).unwrap();
        let r = build_stage(&a, &g, 1, None, &StageOptions::default());
        assert!(matches!(r, Err(Error::NonSimpleEigenvalues { .. })));
    }

    #[test]
    fn hat_of_real_and_imaginary_diagonal() {
        let grid = vec![0.0, 1.0];
        let real = to_complex(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let p = MatrixPath::new(grid.clone(), vec![real.clone(), real.clone()]).unwrap();
        assert_eq!(hat_g(&p), p);
        let im = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.0, 1.0), c(0.0, 2.0)]));
        let p = MatrixPath::new(grid, vec![im.clone(), im]).unwrap();
        assert!(hat_g(&p).values().iter().all(|m| m.norm() == 0.0));
    }

    #[test]
    fn eta_reduction_examples() {
        assert_eq!(eta_reduction(&[-1.0, -1.0]).unwrap().value, -1.0);
        let r = eta_reduction(&[2.0, -4.0]).unwrap();
        assert_eq!(r.value, 2.0);
        assert_eq!(r.upper, -1.0);
        assert_eq!(eta_reduction(&[0.0, 0.0, 0.0]).unwrap().value, 0.0);
    }

    #[test]
    fn linearize_cubic() {
        let b = PolyBound::new(vec![0.0, 1.0], vec![vec![1.5, 1.5]], vec![3]).unwrap();
        assert_eq!(linearize_bound(&b, 2.0).unwrap(), vec![6.0, 6.0]);
        assert_eq!(linearize_bound(&b, 0.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_transform_example() {
        let grid = uniform_grid(0.0, 1.0, 0.5);
        let a = real_path(&grid, |_| DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0])).unwrap();
        let g = real_path(&grid, |_| DMatrix::zeros(2, 2)).unwrap();
        let s = build_stage(&a, &g, 1, None, &StageOptions::default()).unwrap();
        let spec = PolyBoundSpec {
            terms: vec![
                Monomial { component: 0, coefficient: Coefficient::Constant(-0.7), exponents: vec![2, 2] },
                Monomial { component: 1, coefficient: Coefficient::Constant(1.3), exponents: vec![1, 2] },
            ],
            whole_space: true,
        };
        let l = push_nonlinearity(&s, &spec).unwrap();
        assert_eq!(l.degrees, vec![4, 3]);
        for m in 0..grid.len() {
            assert!((l.coeffs[0][m] - 0.7).abs() < 1e-14);
            assert!((l.coeffs[1][m] - 1.3).abs() < 1e-14);
        }
    }

    #[test]
    fn restricted_validity_is_unsupported() {
        let grid = uniform_grid(0.0, 1.0, 0.5);
        let a = real_path(&grid, |_| DMatrix::from_row_slice(1, 1, &[-1.0])).unwrap();
        let g = real_path(&grid, |_| DMatrix::zeros(1, 1)).unwrap();
        let s = build_stage(&a, &g, 1, None, &StageOptions::default()).unwrap();
        let spec = PolyBoundSpec { terms: vec![], whole_space: false };
        assert!(matches!(push_nonlinearity(&s, &spec), Err(Error::Unsupported(_))));
    }
}
