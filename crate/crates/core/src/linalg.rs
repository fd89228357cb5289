//! Dense small-matrix kernel: induced 2-norm, sorted complex eigendecomposition,
//! continuity-preserving eigenpath tracking and finite-difference derivatives of
//! sampled matrix paths.

use nalgebra::linalg::Schur;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid_input, Error, Result};
use crate::path::validate_grid;

/// Dense complex matrix used throughout the pipeline.
pub type CMat = DMatrix<Complex64>;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

/// Promotes a real matrix to the complex type.
pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

fn check_finite(m: &CMat) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        invalid_input("matrix has non-finite entries")
    }
}

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(m: &CMat) -> Result<f64> {
    check_finite(m)?;
    Ok(norm2(m))
}

/// Induced 2-norm without the finiteness check. Callers guarantee finite input.
pub(crate) fn norm2(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.ncols() == 1 || m.nrows() == 1 {
        return m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |acc: f64, &s| acc.max(s))
}

/// 2-norm condition number; infinite for singular input.
pub(crate) fn cond2(m: &CMat) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(0.0_f64, |a, &s| a.max(s));
    let min = sv.iter().fold(f64::INFINITY, |a, &s| a.min(s));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub(crate) fn inverse(m: &CMat) -> Result<CMat> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("matrix is singular".into()))
}

/// One eigendecomposition with its near-defectiveness diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    /// Ordered by descending real part, ties by descending imaginary part.
    pub values: Vec<Complex64>,
    /// Unit-norm eigenvector columns matching `values`.
    pub vectors: CMat,
    /// Minimal pairwise eigenvalue distance (infinite for n = 1).
    pub min_gap: f64,
    /// 2-norm condition number of `vectors`.
    pub vec_cond: f64,
    /// max_i ‖A v_i − λ_i v_i‖.
    pub residual: f64,
}

/// Eigendecomposition through the complex Schur form `A = Q T Qᴴ`; eigenvectors
/// of the triangular factor come from back substitution.
pub fn eig_sorted(a: &CMat) -> Result<Eigen> {
    check_finite(a)?;
    let n = a.nrows();
    if n != a.ncols() {
        return invalid_input("eig_sorted needs a square matrix");
    }
    if n == 0 {
        return invalid_input("eig_sorted needs a non-empty matrix");
    }
    let scale = norm2(a);
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();

    let raw: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    let mut vecs = CMat::zeros(n, n);
    for i in 0..n {
        let lambda = raw[i];
        let mut x = vec![C0; n];
        x[i] = C1;
        for j in (0..i).rev() {
            let mut s = C0;
            for k in (j + 1)..=i {
                s += t[(j, k)] * x[k];
            }
            let mut denom = t[(j, j)] - lambda;
            if denom.norm() < tiny {
                denom = Complex64::new(tiny, 0.0);
            }
            x[j] = -s / denom;
        }
        let col = &q * nalgebra::DVector::from_vec(x);
        let nrm = col.norm();
        vecs.set_column(i, &(col / Complex64::new(nrm, 0.0)));
    }

    let order = sort_order(&raw, scale);
    let values: Vec<Complex64> = order.iter().map(|&i| raw[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = vecs.column(src).into_owned();
        normalize_phase_by_largest(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok(finish_eigen(a, values, vectors))
}

fn finish_eigen(a: &CMat, values: Vec<Complex64>, vectors: CMat) -> Eigen {
    let n = values.len();
    let mut min_gap = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            min_gap = min_gap.min((values[i] - values[j]).norm());
        }
    }
    let residual = (0..n)
        .map(|i| {
            let v = vectors.column(i);
            (a * v - v * values[i]).norm()
        })
        .fold(0.0, f64::max);
    let vec_cond = cond2(&vectors);
    Eigen {
        values,
        vectors,
        min_gap,
        vec_cond,
        residual,
    }
}

/// Descending real part; entries whose real parts agree to a relative
/// tolerance form a cluster ordered by descending imaginary part.
fn sort_order(vals: &[Complex64], scale: f64) -> Vec<usize> {
    let tol = 1e-10 * (1.0 + scale);
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[b].re.total_cmp(&vals[a].re));
    let mut out = Vec::with_capacity(idx.len());
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && (vals[idx[end - 1]].re - vals[idx[end]].re).abs() <= tol {
            end += 1;
        }
        let mut cluster = idx[start..end].to_vec();
        cluster.sort_by(|&a, &b| vals[b].im.total_cmp(&vals[a].im));
        out.extend(cluster);
        start = end;
    }
    out
}

/// Rotates the column so its largest-magnitude entry is real and positive.
fn normalize_phase_by_largest(col: &mut nalgebra::DVector<Complex64>) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, z) in col.iter().enumerate() {
        // strict comparison with a small relative margin keeps the choice stable
        if z.norm() > best_mag * (1.0 + 1e-12) {
            best_mag = z.norm();
            best = i;
        }
    }
    if best_mag > 0.0 {
        let phase = col[best].conj() / best_mag;
        *col *= phase;
    }
}

/// A sampled matrix function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPath {
    grid: Vec<f64>,
    values: Vec<CMat>,
}

impl MatrixPath {
    pub fn new(grid: Vec<f64>, values: Vec<CMat>) -> Result<Self> {
        validate_grid(&grid, 2)?;
        if grid.len() != values.len() {
            return invalid_input("grid and matrix counts differ");
        }
        let (r, c) = values[0].shape();
        if values.iter().any(|m| m.shape() != (r, c)) {
            return invalid_input("matrices in a path must share their dimension");
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Vec<f64>, mut f: impl FnMut(f64) -> CMat) -> Result<Self> {
        let values = grid.iter().map(|&t| f(t)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[CMat] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Row dimension of the sampled matrices.
    pub fn dim(&self) -> usize {
        self.values[0].nrows()
    }

    /// Spectral norm at every sample.
    pub fn norms(&self) -> Vec<f64> {
        self.values.iter().map(norm2).collect()
    }

    /// Entrywise linear interpolation.
    pub fn at(&self, t: f64) -> CMat {
        let g = &self.grid;
        if t <= g[0] {
            return self.values[0].clone();
        }
        if t >= g[g.len() - 1] {
            return self.values[g.len() - 1].clone();
        }
        let i = crate::path::locate(g, t);
        let w = (t - g[i]) / (g[i + 1] - g[i]);
        &self.values[i] * Complex64::new(1.0 - w, 0.0) + &self.values[i + 1] * Complex64::new(w, 0.0)
    }

    pub(crate) fn map(&self, f: impl Fn(&CMat) -> CMat) -> MatrixPath {
        MatrixPath {
            grid: self.grid.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }
}

/// What `track_eigens` does when two matchings are equally good.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmbiguityPolicy {
    /// Fail with [`Error::RefineGrid`].
    Error,
    /// Pick the matching with the best eigenvector overlap and flag the samples.
    Flag,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOptions {
    /// Samples with `min_gap < gap_rel * max(‖A‖, 1)` are flagged.
    pub gap_rel: f64,
    /// Samples with an eigenvector condition number above this are flagged.
    pub cond_max: f64,
    /// Relative tolerance for declaring two matching costs equal.
    pub ambiguity_tol: f64,
    pub on_ambiguous: AmbiguityPolicy,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            gap_rel: 1e-6,
            cond_max: 1e6,
            ambiguity_tol: 1e-9,
            on_ambiguous: AmbiguityPolicy::Error,
        }
    }
}

/// Eigenvalues and eigenvectors tracked continuously along a matrix path.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPath {
    pub grid: Vec<f64>,
    pub lambdas: Vec<Vec<Complex64>>,
    pub vectors: Vec<CMat>,
    pub min_gap: Vec<f64>,
    pub vec_cond: Vec<f64>,
    pub residual: Vec<f64>,
    /// ‖A(t)‖ per sample, used to scale the gap threshold.
    pub matrix_norm: Vec<f64>,
    /// Samples whose matching to a neighbour was ambiguous.
    pub ambiguous: Vec<bool>,
}

impl EigenPath {
    /// Samples considered near-defective under the given thresholds.
    pub fn flagged(&self, gap_rel: f64, cond_max: f64) -> Vec<bool> {
        (0..self.grid.len())
            .map(|m| {
                self.ambiguous[m]
                    || self.min_gap[m] < gap_rel * self.matrix_norm[m].max(1.0)
                    || !(self.vec_cond[m] <= cond_max)
            })
            .collect()
    }

    /// Pointwise maximum real part.
    pub fn alpha_max(&self) -> Vec<f64> {
        self.lambdas
            .iter()
            .map(|l| l.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }
}

/// Tracks eigenpairs along `path`: consecutive samples are matched by the
/// permutation of minimal total eigenvalue displacement and each column's
/// phase is aligned with its predecessor.
pub fn track_eigens(path: &MatrixPath, opts: &TrackOptions) -> Result<EigenPath> {
    let n = path.dim();
    if n > 8 {
        return Err(Error::Unsupported(format!(
            "eigenpath tracking is limited to n <= 8 (got {n})"
        )));
    }
    let perms = permutations(n);
    let m_len = path.len();
    let mut out = EigenPath {
        grid: path.grid().to_vec(),
        lambdas: Vec::with_capacity(m_len),
        vectors: Vec::with_capacity(m_len),
        min_gap: Vec::with_capacity(m_len),
        vec_cond: Vec::with_capacity(m_len),
        residual: Vec::with_capacity(m_len),
        matrix_norm: Vec::with_capacity(m_len),
        ambiguous: vec![false; m_len],
    };

    for (m, a) in path.values().iter().enumerate() {
        let e = eig_sorted(a)?;
        let norm_a = norm2(a);
        let (values, vectors) = if m == 0 {
            (e.values, e.vectors)
        } else {
            let prev_l = &out.lambdas[m - 1];
            let prev_v = &out.vectors[m - 1];
            let scale = 1.0 + prev_l.iter().chain(&e.values).map(|z| z.norm()).fold(0.0, f64::max);
            let cost = |p: &[usize]| -> f64 {
                p.iter()
                    .enumerate()
                    .map(|(i, &j)| (e.values[j] - prev_l[i]).norm())
                    .sum()
            };
            let overlap = |p: &[usize]| -> f64 {
                p.iter()
                    .enumerate()
                    .map(|(i, &j)| prev_v.column(i).dotc(&e.vectors.column(j)).norm())
                    .sum()
            };
            let costs: Vec<f64> = perms.iter().map(|p| cost(p)).collect();
            let best_cost = costs.iter().cloned().fold(f64::INFINITY, f64::min);
            let tol = opts.ambiguity_tol * scale;
            let ties: Vec<usize> = (0..perms.len()).filter(|&k| costs[k] <= best_cost + tol).collect();
            let mut chosen = ties[0];
            let mut ambiguous = false;
            for &k in &ties[1..] {
                // tied matchings that assign numerically equal eigenvalues are the same branch choice
                let differ: f64 = perms[k]
                    .iter()
                    .zip(&perms[chosen])
                    .map(|(&a, &b)| (e.values[a] - e.values[b]).norm())
                    .sum();
                if differ > 1e-6 * scale {
                    ambiguous = true;
                }
                if overlap(&perms[k]) > overlap(&perms[chosen]) + 1e-12 {
                    chosen = k;
                }
            }
            if ambiguous {
                match opts.on_ambiguous {
                    AmbiguityPolicy::Error => {
                        return Err(Error::RefineGrid {
                            t_start: path.grid()[m - 1],
                            t_end: path.grid()[m],
                        })
                    }
                    AmbiguityPolicy::Flag => {
                        out.ambiguous[m - 1] = true;
                        out.ambiguous[m] = true;
                    }
                }
            }
            let p = &perms[chosen];
            let values: Vec<Complex64> = p.iter().map(|&j| e.values[j]).collect();
            let mut vectors = CMat::zeros(n, n);
            for (i, &j) in p.iter().enumerate() {
                let mut col = e.vectors.column(j).into_owned();
                let ov = prev_v.column(i).dotc(&col);
                if ov.norm() > 0.0 {
                    col *= ov.conj() / ov.norm();
                }
                vectors.set_column(i, &col);
            }
            (values, vectors)
        };
        out.lambdas.push(values);
        out.vectors.push(vectors);
        out.min_gap.push(e.min_gap);
        out.vec_cond.push(e.vec_cond);
        out.residual.push(e.residual);
        out.matrix_norm.push(norm_a);
    }
    Ok(out)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// Second-order finite-difference derivative of a sampled path: three-point
/// central stencils inside, one-sided three-point stencils at the ends.
/// Non-uniform grids use the matching Lagrange weights, applied to
/// differences so that constant paths give exact zeros.
pub fn path_derivative(path: &MatrixPath) -> Result<MatrixPath> {
    let g = path.grid();
    let v = path.values();
    let n = g.len();
    if n < 3 {
        return invalid_input("path_derivative needs at least 3 samples");
    }
    let c = |x: f64| Complex64::new(x, 0.0);
    let mut out = Vec::with_capacity(n);
    {
        let (h1, h2) = (g[1] - g[0], g[2] - g[1]);
        let w1 = (h1 + h2) / (h1 * h2);
        let w2 = -h1 / (h2 * (h1 + h2));
        out.push((&v[1] - &v[0]) * c(w1) + (&v[2] - &v[0]) * c(w2));
    }
    for i in 1..n - 1 {
        let (h1, h2) = (g[i] - g[i - 1], g[i + 1] - g[i]);
        let wm = -h2 / (h1 * (h1 + h2));
        let wp = h1 / (h2 * (h1 + h2));
        out.push((&v[i - 1] - &v[i]) * c(wm) + (&v[i + 1] - &v[i]) * c(wp));
    }
    {
        let (h1, h2) = (g[n - 2] - g[n - 3], g[n - 1] - g[n - 2]);
        let wa = h2 / (h1 * (h1 + h2));
        let wb = -(h1 + h2) / (h1 * h2);
        out.push((&v[n - 3] - &v[n - 1]) * c(wa) + (&v[n - 2] - &v[n - 1]) * c(wb));
    }
    MatrixPath::new(g.to_vec(), out)
}
