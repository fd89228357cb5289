//! Slow/fast split of `B(t)` by centered moving averages, the averaged growth
//! exponents of the resulting linear block and the window scan.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::linalg::{to_complex, MatrixPath};
use crate::path::{uniform_grid, validate_grid};
use crate::systems::SystemSpec;
use crate::transform_chain::{build_chain, StageOptions};

/// Moving-average window lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Same window for every entry.
    Scalar(f64),
    /// One window per matrix entry.
    PerEntry(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomyConfig {
    pub window: Window,
    /// Cell length of the composite Gauss–Legendre rule.
    pub quad_step: f64,
}

impl DichotomyConfig {
    pub fn scalar(delta: f64, quad_step: f64) -> Self {
        Self { window: Window::Scalar(delta), quad_step }
    }

    fn window_at(&self, i: usize, j: usize) -> f64 {
        match &self.window {
            Window::Scalar(d) => *d,
            Window::PerEntry(m) => m[i][j],
        }
    }

    fn max_window(&self) -> f64 {
        match &self.window {
            Window::Scalar(d) => *d,
            Window::PerEntry(m) => m.iter().flatten().cloned().fold(0.0, f64::max),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let windows: Vec<f64> = match &self.window {
            Window::Scalar(d) => vec![*d],
            Window::PerEntry(m) => {
                if m.len() != n || m.iter().any(|r| r.len() != n) {
                    return invalid_config(format!("per-entry window matrix must be {n}x{n}"));
                }
                m.iter().flatten().cloned().collect()
            }
        };
        if windows.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return invalid_config("windows must be finite and nonnegative");
        }
        let needs_quad = windows.iter().any(|&d| d > 0.0);
        if needs_quad && !(self.quad_step > 0.0 && self.quad_step.is_finite()) {
            return invalid_config("quadrature step must be positive");
        }
        if let Some(d) = windows.iter().cloned().filter(|&d| d > 0.0).reduce(f64::min) {
            if self.quad_step > d / 4.0 {
                return invalid_config(format!(
                    "quadrature step {} exceeds a quarter of the window {d}",
                    self.quad_step
                ));
            }
        }
        Ok(())
    }
}

const GL_X: [f64; 4] = [
    0.5 - 0.5 * 0.861_136_311_594_052_6,
    0.5 - 0.5 * 0.339_981_043_584_856_3,
    0.5 + 0.5 * 0.339_981_043_584_856_3,
    0.5 + 0.5 * 0.861_136_311_594_052_6,
];
const GL_W: [f64; 4] = [
    0.5 * 0.347_854_845_137_453_8,
    0.5 * 0.652_145_154_862_546_1,
    0.5 * 0.652_145_154_862_546_1,
    0.5 * 0.347_854_845_137_453_8,
];

fn gauss4<F: Fn(f64) -> DMatrix<f64>>(b: &F, lo: f64, hi: f64, n: usize) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(n, n);
    let h = hi - lo;
    if h == 0.0 {
        return acc;
    }
    for (x, w) in GL_X.iter().zip(GL_W) {
        acc += b(lo + h * x) * (w * h);
    }
    acc
}

/// Running integral of `B` on a uniform mesh, reusable across windows.
pub struct CumulativeIntegral {
    start: f64,
    step: f64,
    nodes: Vec<DMatrix<f64>>,
    n: usize,
}

impl CumulativeIntegral {
    pub fn new<F: Fn(f64) -> DMatrix<f64>>(b: &F, start: f64, end: f64, step: f64) -> Self {
        let n = b(start).nrows();
        let cells = (((end - start) / step).ceil() as usize).max(1);
        let mut nodes = Vec::with_capacity(cells + 1);
        let mut acc = DMatrix::zeros(n, n);
        nodes.push(acc.clone());
        for c in 0..cells {
            let lo = start + c as f64 * step;
            acc += gauss4(b, lo, lo + step, n);
            nodes.push(acc.clone());
        }
        Self { start, step, nodes, n }
    }

    fn end(&self) -> f64 {
        self.start + (self.nodes.len() - 1) as f64 * self.step
    }

    /// `int_start^x B`.
    pub fn at<F: Fn(f64) -> DMatrix<f64>>(&self, b: &F, x: f64) -> DMatrix<f64> {
        let rel = ((x - self.start) / self.step).floor();
        let c = (rel.max(0.0) as usize).min(self.nodes.len() - 1);
        let node = self.start + c as f64 * self.step;
        &self.nodes[c] + gauss4(b, node, x, self.n)
    }
}

/// Splits `B` into the centered moving average `a0` and the remainder `g0`.
pub fn moving_average_split<F>(
    b: &F,
    config: &DichotomyConfig,
    grid: &[f64],
) -> Result<(MatrixPath, MatrixPath)>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    validate_grid(grid, 2)?;
    let n = b(grid[0]).nrows();
    config.validate(n)?;
    let half = config.max_window() / 2.0;
    let cum = (half > 0.0).then(|| {
        CumulativeIntegral::new(b, grid[0] - half, grid[grid.len() - 1] + half, config.quad_step)
    });
    split_with(b, config, grid, cum.as_ref())
}

fn split_with<F>(
    b: &F,
    config: &DichotomyConfig,
    grid: &[f64],
    cum: Option<&CumulativeIntegral>,
) -> Result<(MatrixPath, MatrixPath)>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    let n = b(grid[0]).nrows();
    config.validate(n)?;
    let mut windows: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| config.window_at(i, j))
        .filter(|&d| d > 0.0)
        .collect();
    windows.sort_by(f64::total_cmp);
    windows.dedup();
    if let (Some(c), Some(&dmax)) = (cum, windows.last()) {
        if c.start > grid[0] - dmax / 2.0 + 1e-12 || c.end() < grid[grid.len() - 1] + dmax / 2.0 - 1e-12 {
            return invalid_input("cumulative integral does not cover the extended interval");
        }
    }
    let mut a0 = Vec::with_capacity(grid.len());
    let mut g0 = Vec::with_capacity(grid.len());
    for &t in grid {
        let bt = b(t);
        let mut a = bt.clone();
        if let Some(c) = cum {
            let avg: Vec<DMatrix<f64>> = windows
                .iter()
                .map(|&d| (c.at(b, t + d / 2.0) - c.at(b, t - d / 2.0)) / d)
                .collect();
            for i in 0..n {
                for j in 0..n {
                    let d = config.window_at(i, j);
                    if d > 0.0 {
                        let w = windows.iter().position(|&x| x == d).unwrap_or(0);
                        a[(i, j)] = avg[w][(i, j)];
                    }
                }
            }
        }
        g0.push(to_complex(&(&bt - &a)));
        a0.push(to_complex(&a));
    }
    Ok((MatrixPath::new(grid.to_vec(), a0)?, MatrixPath::new(grid.to_vec(), g0)?))
}

/// Averaged exponents of the linear block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiEstimate {
    pub phi1: f64,
    pub phi2: f64,
    pub phi1_half: f64,
    pub phi2_half: f64,
    pub converged: bool,
}

/// Integral of the piecewise-linear interpolant from `grid[0]` to `t`.
pub(crate) fn integral_to(grid: &[f64], values: &[f64], t: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..grid.len() - 1 {
        if grid[i + 1] <= t {
            acc += 0.5 * (grid[i + 1] - grid[i]) * (values[i] + values[i + 1]);
        } else {
            if t > grid[i] {
                let w = (t - grid[i]) / (grid[i + 1] - grid[i]);
                let vt = values[i] + w * (values[i + 1] - values[i]);
                acc += 0.5 * (t - grid[i]) * (values[i] + vt);
            }
            break;
        }
    }
    acc
}

/// `phi1 = mean(alpha_max + |G|)`, `phi2 = mean(alpha_max + |G^|)` over
/// `[t0, t0 + horizon]`, with the half-horizon values as a convergence check.
pub fn phi_exponents(
    grid: &[f64],
    alpha_max: &[f64],
    g_norm: &[f64],
    g_hat_norm: &[f64],
    horizon: f64,
    tol: f64,
) -> Result<PhiEstimate> {
    validate_grid(grid, 2)?;
    if alpha_max.len() != grid.len() || g_norm.len() != grid.len() || g_hat_norm.len() != grid.len() {
        return invalid_input("paths must share the grid");
    }
    let t0 = grid[0];
    if !(horizon > 0.0) || t0 + horizon > grid[grid.len() - 1] * (1.0 + 1e-12) + 1e-12 {
        return invalid_config("horizon must be positive and covered by the paths");
    }
    let half_end = t0 + horizon / 2.0;
    if grid.iter().filter(|&&t| t <= half_end).count() < 3 {
        return invalid_config("horizon too short for two half-horizon estimates");
    }
    let s1: Vec<f64> = alpha_max.iter().zip(g_norm).map(|(a, g)| a + g).collect();
    let s2: Vec<f64> = alpha_max.iter().zip(g_hat_norm).map(|(a, g)| a + g).collect();
    let end = (t0 + horizon).min(grid[grid.len() - 1]);
    let phi1 = integral_to(grid, &s1, end) / horizon;
    let phi2 = integral_to(grid, &s2, end) / horizon;
    let phi1_half = integral_to(grid, &s1, half_end) / (horizon / 2.0);
    let phi2_half = integral_to(grid, &s2, half_end) / (horizon / 2.0);
    let converged = (phi1 - phi1_half).abs() < tol && (phi2 - phi2_half).abs() < tol;
    Ok(PhiEstimate { phi1, phi2, phi1_half, phi2_half, converged })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Phi1,
    Phi2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOptions {
    pub grid_step: f64,
    pub quad_step: f64,
    pub phi_tol: f64,
    pub objective: Objective,
    pub stage: StageOptions,
    /// Evaluate rows on the rayon pool when the `parallel` feature is on.
    pub parallel: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            grid_step: 0.01,
            quad_step: 0.01,
            phi_tol: 1e-3,
            objective: Objective::Phi2,
            stage: StageOptions::default(),
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub delta: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub converged: bool,
    /// The slow matrix was not diagonalizable somewhere; excluded from argmin.
    pub irregular: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTable {
    pub rows: Vec<ScanRow>,
    pub argmin_phi1: Option<usize>,
    pub argmin_phi2: Option<usize>,
    pub horizon: f64,
    pub objective: Objective,
}

impl ScanTable {
    /// Row minimizing the configured objective.
    pub fn best(&self) -> Option<&ScanRow> {
        let i = match self.objective {
            Objective::Phi1 => self.argmin_phi1,
            Objective::Phi2 => self.argmin_phi2,
        }?;
        self.rows.get(i)
    }
}

/// Stage-`k` exponents for every window length in `deltas`.
pub fn window_scan(
    system: &SystemSpec,
    deltas: &[f64],
    horizon: f64,
    k: usize,
    opts: &ScanOptions,
) -> Result<ScanTable> {
    system.validate()?;
    if deltas.is_empty() {
        return invalid_config("window grid is empty");
    }
    if deltas.windows(2).any(|w| w[1] < w[0]) || deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return invalid_config("window grid must be finite, nonnegative and nondecreasing");
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return invalid_config("horizon must be positive");
    }
    if k == 0 {
        return invalid_config("stage index starts at 1");
    }
    for &d in deltas.iter().filter(|&&d| d > 0.0) {
        DichotomyConfig::scalar(d, opts.quad_step).validate(system.dim())?;
    }
    let t0 = system.t0;
    let grid = uniform_grid(t0, t0 + horizon, opts.grid_step);
    let b = |t: f64| system.b_at(t);
    let dmax = deltas[deltas.len() - 1];
    let cum = (dmax > 0.0).then(|| {
        CumulativeIntegral::new(&b, t0 - dmax / 2.0, t0 + horizon + dmax / 2.0, opts.quad_step)
    });

    let row = |delta: f64| -> Result<ScanRow> {
        let cfg = DichotomyConfig::scalar(delta, opts.quad_step);
        let (a0, g0) = split_with(&b, &cfg, &grid, if delta > 0.0 { cum.as_ref() } else { None })?;
        let stage = match build_chain(&a0, &g0, k, &opts.stage) {
            Ok(mut s) => s.pop().expect("non-empty chain"),
            Err(Error::NonSimpleEigenvalues { .. }) | Err(Error::RefineGrid { .. }) => {
                return Ok(ScanRow { delta, phi1: f64::NAN, phi2: f64::NAN, converged: false, irregular: true })
            }
            Err(e) => return Err(e),
        };
        let phi = phi_exponents(&grid, &stage.alpha_max, &stage.g_norm, &stage.g_hat_norm, horizon, opts.phi_tol)?;
        Ok(ScanRow { delta, phi1: phi.phi1, phi2: phi.phi2, converged: phi.converged, irregular: false })
    };

    let rows: Vec<ScanRow> = run_rows(deltas, opts.parallel, row)?;
    let argmin = |f: fn(&ScanRow) -> f64| {
        let mut best: Option<usize> = None;
        for (i, r) in rows.iter().enumerate() {
            if r.irregular {
                continue;
            }
            if best.map_or(true, |b| f(r) < f(&rows[b])) {
                best = Some(i);
            }
        }
        best
    };
    Ok(ScanTable {
        argmin_phi1: argmin(|r| r.phi1),
        argmin_phi2: argmin(|r| r.phi2),
        rows,
        horizon,
        objective: opts.objective,
    })
}

#[cfg(feature = "parallel")]
fn run_rows<F>(deltas: &[f64], parallel: bool, row: F) -> Result<Vec<ScanRow>>
where
    F: Fn(f64) -> Result<ScanRow> + Sync,
{
    use rayon::prelude::*;
    if parallel {
        deltas.par_iter().map(|&d| row(d)).collect()
    } else {
        deltas.iter().map(|&d| row(d)).collect()
    }
}

#[cfg(not(feature = "parallel"))]
fn run_rows<F>(deltas: &[f64], _parallel: bool, row: F) -> Result<Vec<ScanRow>>
where
    F: Fn(f64) -> Result<ScanRow>,
{
    deltas.iter().map(|&d| row(d)).collect()
}

/// Evenly spaced window grid `start, start + step, ..., end`.
pub fn delta_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && end >= start && start >= 0.0) {
        return invalid_config("window grid needs 0 <= start <= end and step > 0");
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

/// Slow matrix at a single time (used by callers that need a0 off-grid).
pub fn slow_matrix_at<F>(b: &F, delta: f64, quad_step: f64, t: f64) -> DMatrix<f64>
where
    F: Fn(f64) -> DMatrix<f64>,
{
    if delta == 0.0 {
        return b(t);
    }
    let n = b(t).nrows();
    let cells = ((delta / quad_step).ceil() as usize).max(1);
    let h = delta / cells as f64;
    let lo = t - delta / 2.0;
    let mut acc = DMatrix::zeros(n, n);
    for c in 0..cells {
        acc += gauss4(b, lo + c as f64 * h, lo + (c + 1) as f64 * h, n);
    }
    acc / delta
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_b_is_its_own_average() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let b = |_t: f64| m.clone();
        let grid = uniform_grid(0.0, 5.0, 0.1);
        let (a0, g0) = moving_average_split(&b, &DichotomyConfig::scalar(1.3, 0.05), &grid).unwrap();
        for (a, g) in a0.values().iter().zip(g0.values()) {
            assert!((a - to_complex(&m)).norm() < 1e-12);
            assert!(g.norm() < 1e-12);
        }
    }

    #[test]
    fn zero_window_keeps_b() {
        let b = |t: f64| DMatrix::from_row_slice(1, 1, &[t.sin()]);
        let grid = uniform_grid(0.0, 2.0, 0.1);
        let (a0, g0) = moving_average_split(&b, &DichotomyConfig::scalar(0.0, 0.0), &grid).unwrap();
        for (m, t) in grid.iter().enumerate() {
            assert_eq!(a0.values()[m][(0, 0)].re, t.sin());
            assert_eq!(g0.values()[m][(0, 0)].re, 0.0);
        }
    }

    #[test]
    fn coarse_quadrature_rejected() {
        let b = |_t: f64| DMatrix::zeros(1, 1);
        let grid = uniform_grid(0.0, 1.0, 0.1);
        let r = moving_average_split(&b, &DichotomyConfig::scalar(0.1, 0.05), &grid);
        assert!(matches!(r, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn per_entry_windows() {
        let b = |t: f64| DMatrix::from_row_slice(1, 2, &[t.sin(), t.sin()]);
        let b2 = |t: f64| {
            let r = b(t);
            DMatrix::from_row_slice(2, 2, &[r[(0, 0)], r[(0, 1)], 0.0, 0.0])
        };
        let grid = uniform_grid(0.0, 3.0, 0.1);
        let p = std::f64::consts::TAU;
        let cfg = DichotomyConfig {
            window: Window::PerEntry(vec![vec![p, 0.0], vec![0.0, 0.0]]),
            quad_step: 0.01,
        };
        let (a0, _) = moving_average_split(&b2, &cfg, &grid).unwrap();
        for (m, t) in grid.iter().enumerate() {
            assert!(a0.values()[m][(0, 0)].re.abs() < 1e-12);
            assert_eq!(a0.values()[m][(0, 1)].re, t.sin());
        }
    }

    #[test]
    fn phi_of_constant_integrand() {
        let grid = uniform_grid(0.0, 10.0, 0.5);
        let a = vec![-0.3; grid.len()];
        let g = vec![0.1; grid.len()];
        let p = phi_exponents(&grid, &a, &g, &g, 10.0, 1e-3).unwrap();
        assert!((p.phi1 + 0.2).abs() < 1e-14);
        assert!(p.converged);
    }

    #[test]
    fn phi_needs_room() {
        let grid = vec![0.0, 1.0];
        let v = vec![0.0; 2];
        assert!(phi_exponents(&grid, &v, &v, &v, 1.0, 1e-3).is_err());
    }

    #[test]
    fn window_grid() {
        assert_eq!(delta_grid(0.0, 20.0, 0.5).unwrap().len(), 41);
    }
}
