use serde::{Deserialize, Serialize};

use crate::aux_ode::{build_aux, integrate_aux_partial, linear_solution, AuxEquation, Trajectory, Variant};
use crate::error::{invalid_input, Error, Result};
use crate::linalg::{norm2, path_derivative, CMat, EigenPath, MatrixPath};
use crate::ode::OdeOptions;
use crate::systems::Forcing;
use crate::transform_chain::{build_stage, push_nonlinearity, ChainStage, PolyBoundSpec, StageOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrregularOptions {
    pub gap_rel: f64,
    pub cond_max: f64,
    /// Grid steps added on each side of a flagged run.
    pub widen_steps: usize,
    /// Stage index recorded in the intervals.
    pub stage: usize,
}

impl Default for IrregularOptions {
    fn default() -> Self {
        Self { gap_rel: 1e-6, cond_max: 1e6, widen_steps: 2, stage: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrregularInterval {
    pub center: f64,
    pub half_width: f64,
    /// First and last flagged sample.
    pub flagged_start: f64,
    pub flagged_end: f64,
    /// Default shift for the patch, twice the half-width so that `t + d`
    /// leaves the interval.
    pub shift: f64,
    pub stage: usize,
    /// The widened interval was clipped by the grid ends.
    pub touches_boundary: bool,
}

impl IrregularInterval {
    pub fn start(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn end(&self) -> f64 {
        self.center + self.half_width
    }
}

/// Near-defective stretches of an eigen path, widened and merged.
pub fn detect_irregular(eig: &EigenPath, opts: &IrregularOptions) -> Result<Vec<IrregularInterval>> {
    if !(opts.gap_rel > 0.0 && opts.cond_max > 0.0) {
        return invalid_input("irregularity thresholds must be positive");
    }
    let flagged = eig.flagged(opts.gap_rel, opts.cond_max);
    let g = &eig.grid;
    let last = g.len() - 1;
    let mut runs: Vec<(usize, usize, usize, usize)> = Vec::new();
    let mut i = 0;
    while i <= last {
        if !flagged[i] {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < last && flagged[j + 1] {
            j += 1;
        }
        let lo = i.saturating_sub(opts.widen_steps);
        let hi = (j + opts.widen_steps).min(last);
        match runs.last_mut() {
            Some(r) if lo <= r.3 => {
                r.1 = j;
                r.3 = hi;
            }
            _ => runs.push((i, j, lo, hi)),
        }
        i = j + 1;
    }
    Ok(runs
        .into_iter()
        .map(|(i, j, lo, hi)| {
            let (a, b) = (g[lo], g[hi]);
            let half_width = 0.5 * (b - a);
            IrregularInterval {
                center: 0.5 * (a + b),
                half_width,
                flagged_start: g[i],
                flagged_end: g[j],
                shift: 2.0 * half_width,
                stage: opts.stage,
                touches_boundary: lo + opts.widen_steps > i || hi < j + opts.widen_steps,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PieceKind {
    Before,
    Inside,
    After,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchPiece {
    pub kind: PieceKind,
    /// Inside the interval `g_norm` already contains `|M|`.
    pub aux: AuxEquation,
    pub v_norm: Vec<f64>,
    pub v_first: CMat,
    pub v_last: CMat,
    pub v_inv_first: CMat,
    /// `|M(t, d)|`, inside piece only.
    pub m_norm: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchedAux {
    pub interval: IrregularInterval,
    /// Shift actually used (the better of the two probes).
    pub d: f64,
    pub m_max: f64,
    /// `max |M|` for the probes `+d` and `-d` (None when the probe failed).
    pub probes: [Option<f64>; 2],
    pub pieces: Vec<PatchPiece>,
}

/// Everything needed to rebuild the first stage on sub-intervals.
pub struct PatchInputs<'a> {
    pub a0: &'a MatrixPath,
    pub g0: &'a MatrixPath,
    pub nonlinearity: &'a PolyBoundSpec,
    pub forcing: &'a Forcing,
    pub variant: Variant,
    pub stage: StageOptions,
}

fn sub_path(p: &MatrixPath, lo: usize, hi: usize) -> Result<MatrixPath> {
    MatrixPath::new(p.grid()[lo..=hi].to_vec(), p.values()[lo..=hi].to_vec())
}

fn piece_from_stage(kind: PieceKind, stage: &ChainStage, inputs: &PatchInputs, m_norm: Option<Vec<f64>>) -> Result<PatchPiece> {
    let bound = push_nonlinearity(stage, inputs.nonlinearity)?;
    let mut aux = build_aux(stage, bound, inputs.forcing, inputs.variant)?;
    if let Some(m) = &m_norm {
        for (g, m) in aux.g_norm.iter_mut().zip(m) {
            *g += m;
        }
    }
    let last = stage.grid.len() - 1;
    Ok(PatchPiece {
        kind,
        aux,
        v_norm: stage.v_cum_norm.clone(),
        v_first: stage.v_cum.values()[0].clone(),
        v_last: stage.v_cum.values()[last].clone(),
        v_inv_first: stage.v_cum_inv.values()[0].clone(),
        m_norm,
    })
}

const GL5: [(f64, f64); 5] = [
    (0.046_910_077_030_668_0, 0.118_463_442_528_094_5),
    (0.230_765_344_947_158_5, 0.239_314_335_249_683_2),
    (0.5, 0.284_444_444_444_444_4),
    (0.769_234_655_052_841_5, 0.239_314_335_249_683_2),
    (0.953_089_922_969_332_0, 0.118_463_442_528_094_5),
];

/// `|M(t, d)| = |d V^-1(t+d) sigma(t) V(t+d)|` with
/// `sigma(t) = int_0^1 a'(t + d(1-s)) ds` by 5-point Gauss-Legendre.
pub fn patch_correction_norm(a_dot: &MatrixPath, t: f64, d: f64, v: &CMat, v_inv: &CMat) -> f64 {
    let n = v.nrows();
    let mut sigma = CMat::zeros(n, n);
    for (x, w) in GL5 {
        sigma += a_dot.at(t + d * (1.0 - x)) * num_complex::Complex64::new(w, 0.0);
    }
    d.abs() * norm2(&(v_inv * sigma * v))
}

fn inside_piece(inputs: &PatchInputs, lo: usize, hi: usize, d: f64, a_dot: &MatrixPath) -> Result<PatchPiece> {
    let g = inputs.a0.grid();
    let (t_lo, t_hi) = (g[0], g[g.len() - 1]);
    let tol = 1e-9 * (t_hi - t_lo);
    if g[lo] + d < t_lo - tol || g[hi] + d > t_hi + tol {
        return invalid_input("shifted interval leaves the grid");
    }
    let a_sh = MatrixPath::from_fn(g[lo..=hi].to_vec(), |t| inputs.a0.at(t + d))?;
    let g_sub = sub_path(inputs.g0, lo, hi)?;
    let stage = build_stage(&a_sh, &g_sub, 1, None, &inputs.stage)?;
    let m: Vec<f64> = (0..stage.grid.len())
        .map(|k| patch_correction_norm(a_dot, stage.grid[k], d, &stage.v.values()[k], &stage.v_inv.values()[k]))
        .collect();
    piece_from_stage(PieceKind::Inside, &stage, inputs, Some(m))
}

/// Three-piece auxiliary equation around an irregular interval of the first
/// stage. Inside the interval the eigen-data of `a0(t + d)` is used and the
/// correction `|M|` is added; the shifts `d` and `-d` are both tried.
pub fn irregular_patch(inputs: &PatchInputs, interval: &IrregularInterval, d: f64) -> Result<PatchedAux> {
    if d == 0.0 || !d.is_finite() {
        return invalid_input("patch shift d must be a nonzero finite number");
    }
    let g = inputs.a0.grid();
    if inputs.g0.grid() != g {
        return invalid_input("slow and fast paths must share the grid");
    }
    let tol = 1e-9 * (g[g.len() - 1] - g[0]);
    let find = |t: f64| g.iter().position(|x| (x - t).abs() <= tol);
    let (Some(lo), Some(hi)) = (find(interval.start()), find(interval.end())) else {
        return invalid_input("interval ends must be grid points");
    };
    if hi < lo + 2 {
        return invalid_input("interval needs at least three grid points");
    }
    let a_dot = path_derivative(inputs.a0)?;

    let mut best: Option<(f64, f64, PatchPiece)> = None;
    let mut probes = [None, None];
    for (slot, dd) in [d, -d].into_iter().enumerate() {
        if let Ok(p) = inside_piece(inputs, lo, hi, dd, &a_dot) {
            let m = p.m_norm.as_ref().map_or(0.0, |m| m.iter().cloned().fold(0.0, f64::max));
            probes[slot] = Some(m);
            if best.as_ref().map_or(true, |b| m < b.1) {
                best = Some((dd, m, p));
            }
        }
    }
    let Some((d_used, m_max, inside)) = best else {
        return Err(Error::PatchFailure(format!(
            "a(t + d) is not diagonalizable on [{}, {}] for d = {d} or d = {}",
            interval.start(),
            interval.end(),
            -d
        )));
    };

    let mut pieces = Vec::with_capacity(3);
    if lo >= 2 {
        let st = build_stage(&sub_path(inputs.a0, 0, lo)?, &sub_path(inputs.g0, 0, lo)?, 1, None, &inputs.stage)?;
        pieces.push(piece_from_stage(PieceKind::Before, &st, inputs, None)?);
    }
    pieces.push(inside);
    let last = g.len() - 1;
    if hi + 2 <= last {
        let st = build_stage(&sub_path(inputs.a0, hi, last)?, &sub_path(inputs.g0, hi, last)?, 1, None, &inputs.stage)?;
        pieces.push(piece_from_stage(PieceKind::After, &st, inputs, None)?);
    }
    Ok(PatchedAux { interval: interval.clone(), d: d_used, m_max, probes, pieces })
}

/// How `z` is carried across a junction between pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JunctionRule {
    /// `z` is continuous.
    #[default]
    Continuous,
    /// `z` is multiplied by `|V_new^-1 V_old|` at the junction.
    Transfer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchedTrajectory {
    pub pieces: Vec<Trajectory>,
    /// `|V(t)| z(t)` per piece at the trajectory times.
    pub bounds: Vec<Vec<f64>>,
    /// Multipliers applied at the junctions.
    pub junction_factors: Vec<f64>,
    pub diverged_at: Option<f64>,
}

impl PatchedTrajectory {
    /// Minimum of `bound - norm` over oracle samples, each compared against
    /// the piece that covers it.
    pub fn min_margin(&self, norm_t: &[f64], norm: &[f64]) -> f64 {
        let mut m = f64::INFINITY;
        for (tr, b) in self.pieces.iter().zip(&self.bounds) {
            let (a, e) = (tr.t[0], tr.t[tr.t.len() - 1]);
            for (&t, &x) in norm_t.iter().zip(norm) {
                if t >= a && t <= e {
                    m = m.min(crate::path::interp(&tr.t, b, t) - x);
                }
            }
        }
        m
    }
}

impl PatchedAux {
    /// `|V^-1(t0) x0|` in the coordinates of the first piece.
    pub fn z0(&self, x0: &[f64]) -> f64 {
        let vi = &self.pieces[0].v_inv_first;
        let x = nalgebra::DVector::from_iterator(x0.len(), x0.iter().map(|&v| num_complex::Complex64::new(v, 0.0)));
        (vi * x).norm()
    }

    fn junction(&self, i: usize, rule: JunctionRule) -> Result<f64> {
        Ok(match rule {
            JunctionRule::Continuous => 1.0,
            JunctionRule::Transfer => {
                let vi = crate::linalg::inverse(&self.pieces[i].v_first)?;
                norm2(&(vi * &self.pieces[i - 1].v_last))
            }
        })
    }

    pub fn integrate(&self, z0: f64, rule: JunctionRule, opts: &OdeOptions) -> Result<PatchedTrajectory> {
        let mut out = PatchedTrajectory { pieces: Vec::new(), bounds: Vec::new(), junction_factors: Vec::new(), diverged_at: None };
        let mut z = z0;
        for (i, p) in self.pieces.iter().enumerate() {
            if i > 0 {
                let f = self.junction(i, rule)?;
                out.junction_factors.push(f);
                z *= f;
            }
            let tr = integrate_aux_partial(&p.aux, z, (p.aux.t_start(), p.aux.t_end()), opts)?;
            let b = crate::aux_ode::bound_from_norms(&p.aux.grid, &p.v_norm, &tr)?;
            z = tr.z[tr.z.len() - 1];
            out.diverged_at = tr.diverged_at;
            out.bounds.push(b);
            out.pieces.push(tr);
            if out.diverged_at.is_some() {
                break;
            }
        }
        Ok(out)
    }

    /// Piecewise closed-form solution of the linearized equations chained
    /// with matching initial conditions. Returns `(t, Z_h, Z_F)`.
    pub fn linear(&self, z_hat: f64, rule: JunctionRule) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let (mut t, mut zh, mut zf) = (Vec::new(), Vec::new(), Vec::new());
        let (mut h0, mut f0) = (1.0, 0.0);
        for (i, p) in self.pieces.iter().enumerate() {
            if i > 0 {
                let f = self.junction(i, rule)?;
                h0 *= f;
                f0 *= f;
            }
            let mu = p.aux.mu(z_hat)?;
            let f0_piece = if p.aux.f0 > 0.0 { p.aux.f0 } else { 1.0 };
            let lin = linear_solution(&p.aux.grid, &mu, &p.aux.forcing_norm, f0_piece)?;
            let skip = usize::from(i > 0);
            for k in skip..lin.grid.len() {
                t.push(lin.grid[k]);
                zh.push(h0 * lin.zh[k]);
                zf.push(f0 * lin.zh[k] + lin.zf[k]);
            }
            h0 = *zh.last().expect("non-empty piece");
            f0 = *zf.last().expect("non-empty piece");
        }
        Ok((t, zh, zf))
    }
}

/// Convenience wrapper around [`PatchedAux::integrate`].
pub fn integrate_patched(patched: &PatchedAux, z0: f64, rule: JunctionRule, opts: &OdeOptions) -> Result<PatchedTrajectory> {
    patched.integrate(z0, rule, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{track_eigens, to_complex, AmbiguityPolicy, TrackOptions};
    use crate::path::uniform_grid;
    use nalgebra::DMatrix;

    fn turning_point(grid: Vec<f64>) -> MatrixPath {
        MatrixPath::from_fn(grid, |t| to_complex(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, t - 1.0, 0.0]))).unwrap()
    }

    fn flag_opts() -> TrackOptions {
        TrackOptions { on_ambiguous: AmbiguityPolicy::Flag, ..Default::default() }
    }

    #[test]
    fn constant_spectrum_has_no_intervals() {
        let grid = uniform_grid(0.0, 1.0, 0.1);
        let p = MatrixPath::from_fn(grid, |_| to_complex(&DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]))).unwrap();
        let eig = track_eigens(&p, &flag_opts()).unwrap();
        assert!(detect_irregular(&eig, &Default::default()).unwrap().is_empty());
    }

    #[test]
    fn turning_point_detected() {
        let grid = uniform_grid(0.0, 2.0, 0.01);
        let eig = track_eigens(&turning_point(grid), &flag_opts()).unwrap();
        let opts = IrregularOptions { gap_rel: 0.05, cond_max: 1e3, ..Default::default() };
        let found = detect_irregular(&eig, &opts).unwrap();
        assert_eq!(found.len(), 1);
        assert!((found[0].center - 1.0).abs() < 0.02);
        assert!(!found[0].touches_boundary);
        // below the global minimum gap nothing is flagged
        let tiny = IrregularOptions { gap_rel: 1e-12, cond_max: 1e300, ..Default::default() };
        let min_gap = eig.min_gap.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min_gap > 1e-12 || detect_irregular(&eig, &tiny).unwrap().len() <= 1);
    }

    #[test]
    fn zero_shift_rejected() {
        let grid = uniform_grid(0.0, 2.0, 0.01);
        let a0 = turning_point(grid.clone());
        let g0 = MatrixPath::from_fn(grid, |_| CMat::zeros(2, 2)).unwrap();
        let spec = PolyBoundSpec::default();
        let forcing = Forcing::none();
        let inputs = PatchInputs { a0: &a0, g0: &g0, nonlinearity: &spec, forcing: &forcing, variant: Variant::Hom34, stage: StageOptions::default() };
        let iv = IrregularInterval { center: 1.0, half_width: 0.02, flagged_start: 1.0, flagged_end: 1.0, shift: 0.04, stage: 0, touches_boundary: false };
        assert!(matches!(irregular_patch(&inputs, &iv, 0.0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn regular_interval_correction_is_first_order() {
        let grid = uniform_grid(0.0, 2.0, 0.01);
        let a0 = MatrixPath::from_fn(grid.clone(), |t| {
            to_complex(&DMatrix::from_row_slice(2, 2, &[-1.0 - 0.2 * t, 0.3, 0.0, -2.0 + 0.1 * t]))
        })
        .unwrap();
        let g0 = MatrixPath::from_fn(grid, |_| CMat::zeros(2, 2)).unwrap();
        let spec = PolyBoundSpec::default();
        let forcing = Forcing::none();
        let inputs = PatchInputs { a0: &a0, g0: &g0, nonlinearity: &spec, forcing: &forcing, variant: Variant::Hom34, stage: StageOptions::default() };
        let iv = IrregularInterval { center: 1.0, half_width: 0.05, flagged_start: 1.0, flagged_end: 1.0, shift: 0.1, stage: 0, touches_boundary: false };
        let d = 0.02;
        let p = irregular_patch(&inputs, &iv, d).unwrap();
        assert_eq!(p.pieces.len(), 3);
        let inside = &p.pieces[1];
        let cond_max = inside.v_norm.iter().cloned().fold(0.0, f64::max)
            * crate::linalg::cond2(&inside.v_inv_first).max(1.0);
        let a_dot_max = (0.2f64 * 0.2 + 0.1 * 0.1).sqrt();
        assert!(p.m_max <= d * a_dot_max * cond_max + 1e-9, "{} vs {}", p.m_max, d * a_dot_max * cond_max);
        let traj = p.integrate(1.0, JunctionRule::Continuous, &OdeOptions::default()).unwrap();
        for w in traj.pieces.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            assert!((a.z[a.z.len() - 1] - b.z[0]).abs() < 1e-12);
        }
    }
}
