//! Stability and boundedness criteria built on the auxiliary equations:
//! local regions from the linearized equation, nonlocal thresholds found by
//! bisection, ellipsoidal regions in state space and the irregular-time patch.

mod ellipsoid;
mod irregular;
mod nonlocal;

pub use ellipsoid::{ellipsoid_region, project, Ellipsoid, Projection};
pub use irregular::{
    detect_irregular, integrate_patched, irregular_patch, patch_correction_norm, IrregularInterval,
    IrregularOptions, JunctionRule, PatchInputs, PatchPiece, PatchedAux, PatchedTrajectory, PieceKind,
};
pub use nonlocal::{nonlocal_threshold, ThresholdMode, ThresholdOptions, ThresholdReport};

use serde::{Deserialize, Serialize};

use crate::aux_ode::{linear_solution, AuxEquation};
use crate::dichotomy::integral_to;
use crate::error::{invalid_input, Result};
use crate::linalg::CMat;
use crate::path::validate_grid;
use crate::systems::matrix_rows;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    AsymptoticallyStable,
    Stable,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    /// `phi < -phi_tol` counts as a negative exponent.
    pub phi_tol: f64,
    /// Decay level of `Z_h(T)` required for asymptotic stability.
    pub decay: f64,
    /// Bound on `sup_t Z_h(t)` for plain stability.
    pub growth_cap: f64,
    /// Allowed increase of `sup int mu` between the half and the full horizon.
    pub drift_tol: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self { phi_tol: 1e-9, decay: 1e-3, growth_cap: 1e3, drift_tol: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub classification: Classification,
    /// Horizon average of `mu`.
    pub phi: f64,
    /// `sup_t int_t0^t mu`.
    pub sup_integral: f64,
    /// `Z_h` at the horizon end.
    pub zh_end: f64,
    pub horizon: f64,
}

/// Classifies `Z' = mu Z` on the horizon covered by `grid`.
pub fn classify_stability(grid: &[f64], mu: &[f64], opts: &ClassifyOptions) -> Result<StabilityVerdict> {
    validate_grid(grid, 2)?;
    if mu.len() != grid.len() || mu.iter().any(|v| !v.is_finite()) {
        return invalid_input("mu must be finite and share the grid");
    }
    let t0 = grid[0];
    let t_end = grid[grid.len() - 1];
    let horizon = t_end - t0;
    let cum = crate::path::cumulative_trapezoid(grid, mu);
    let phi = cum[cum.len() - 1] / horizon;
    let sup_integral = cum.iter().cloned().fold(0.0, f64::max);
    let half = integral_sup_until(grid, mu, &cum, t0 + horizon / 2.0);
    let zh_end = cum[cum.len() - 1].exp();
    let max_mu = mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let classification = if max_mu < 0.0 || (phi < -opts.phi_tol && zh_end < opts.decay) {
        Classification::AsymptoticallyStable
    } else if sup_integral <= opts.growth_cap.ln() && sup_integral - half <= opts.drift_tol {
        Classification::Stable
    } else {
        Classification::Inconclusive
    };
    Ok(StabilityVerdict { classification, phi, sup_integral, zh_end, horizon })
}

fn integral_sup_until(grid: &[f64], mu: &[f64], cum: &[f64], t: f64) -> f64 {
    let mut sup: f64 = 0.0;
    for (g, c) in grid.iter().zip(cum) {
        if *g > t {
            break;
        }
        sup = sup.max(*c);
    }
    sup.max(integral_to(grid, mu, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Stability,
    Asymptotic,
    Trapping,
    Bounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZhatRow {
    pub z_hat: f64,
    pub zh_sup: f64,
    pub zf_sup: f64,
    /// Region expression at this `z_hat` (NaN when not admissible).
    pub value: f64,
    pub classification: Classification,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub kind: RegionKind,
    /// Threshold on `|V^-1(t0) x0|`.
    pub radius: f64,
    /// The region is the whole space (no nonlinearity and a stable linear part).
    pub unbounded: bool,
    pub empty: bool,
    pub reasons: Vec<String>,
    pub table: Vec<ZhatRow>,
    pub best_z_hat: Option<f64>,
    pub classification: Classification,
    pub phi: Option<f64>,
    pub horizon: f64,
    pub certified_on_horizon: bool,
    pub asymptotic_gain: Option<f64>,
    /// Quadratic form of the ellipsoid `x^T Q x < radius^2`.
    pub q: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionOptions {
    pub z_min: f64,
    pub z_cap: f64,
    pub points: usize,
    pub refine_points: usize,
    /// Rounds of local refinement around the current maximizer.
    pub refine_rounds: usize,
    pub classify: ClassifyOptions,
}

impl Default for RegionOptions {
    fn default() -> Self {
        Self { z_min: 1e-3, z_cap: 1e3, points: 32, refine_points: 16, refine_rounds: 2, classify: ClassifyOptions::default() }
    }
}

struct RowEval {
    row: ZhatRow,
    certified: bool,
}

fn evaluate(aux: &AuxEquation, z_hat: f64, f0: f64, opts: &RegionOptions) -> Result<RowEval> {
    let mu = aux.mu(z_hat)?;
    let verdict = classify_stability(&aux.grid, &mu, &opts.classify)?;
    let lin = linear_solution(&aux.grid, &mu, &aux.forcing_norm, aux.f0)?;
    let admissible = verdict.classification != Classification::Inconclusive;
    let value = if admissible { (z_hat - f0 * lin.zf_sup) / lin.zh_sup } else { f64::NAN };
    Ok(RowEval {
        row: ZhatRow {
            z_hat,
            zh_sup: lin.zh_sup,
            zf_sup: lin.zf_sup,
            value,
            classification: verdict.classification,
            phi: verdict.phi,
        },
        certified: lin.certified_on_horizon,
    })
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi <= lo {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (r * i as f64).exp()).collect()
}

fn zhat_region(
    aux: &AuxEquation,
    f0: f64,
    kind: RegionKind,
    v_t0: &CMat,
    v_tail_max: f64,
    opts: &RegionOptions,
) -> Result<RegionReport> {
    if !(opts.z_min > 0.0 && opts.z_cap > opts.z_min && opts.points >= 2) {
        return invalid_input("z_hat grid needs 0 < z_min < z_cap and at least 2 points");
    }
    let horizon = aux.t_end() - aux.t_start();
    let admissible = |z: f64| -> Result<bool> {
        Ok(evaluate(aux, z, f0, opts)?.row.classification != Classification::Inconclusive)
    };
    let mut report = RegionReport {
        kind,
        radius: 0.0,
        unbounded: false,
        empty: true,
        reasons: Vec::new(),
        table: Vec::new(),
        best_z_hat: None,
        classification: Classification::Inconclusive,
        phi: None,
        horizon,
        certified_on_horizon: false,
        asymptotic_gain: None,
        q: None,
    };
    if !admissible(opts.z_min)? {
        report.reasons.push(format!(
            "linearized equation is inconclusive already at z_hat = {}",
            opts.z_min
        ));
        report.table.push(evaluate(aux, opts.z_min, f0, opts)?.row);
        return Ok(report);
    }

    // bracket the first z_hat where admissibility fails
    let mut ok = opts.z_min;
    let mut fail = None;
    while ok < opts.z_cap {
        let next = (ok * 2.0).min(opts.z_cap);
        if admissible(next)? {
            ok = next;
        } else {
            fail = Some(next);
            break;
        }
    }
    let upper = match fail {
        Some(mut hi) => {
            for _ in 0..40 {
                let mid = 0.5 * (ok + hi);
                if admissible(mid)? {
                    ok = mid;
                } else {
                    hi = mid;
                }
            }
            ok
        }
        None => opts.z_cap,
    };

    let mut rows: Vec<RowEval> = geometric(opts.z_min, upper, opts.points)
        .into_iter()
        .map(|z| evaluate(aux, z, f0, opts))
        .collect::<Result<_>>()?;
    for _ in 0..opts.refine_rounds {
        let Some(i) = argmax(&rows) else { break };
        let lo = if i > 0 { rows[i - 1].row.z_hat } else { rows[i].row.z_hat };
        let hi = if i + 1 < rows.len() { rows[i + 1].row.z_hat } else { rows[i].row.z_hat };
        if hi > lo {
            for z in geometric(lo, hi, opts.refine_points + 2).into_iter().skip(1).take(opts.refine_points) {
                if z != rows[i].row.z_hat {
                    rows.push(evaluate(aux, z, f0, opts)?);
                }
            }
        }
        rows.sort_by(|a, b| a.row.z_hat.total_cmp(&b.row.z_hat));
    }

    match argmax(&rows) {
        Some(i) if rows[i].row.value > 0.0 => {
            let r = &rows[i];
            report.radius = r.row.value;
            report.empty = false;
            report.best_z_hat = Some(r.row.z_hat);
            report.classification = r.row.classification;
            report.phi = Some(r.row.phi);
            report.certified_on_horizon = r.certified;
            if f0 > 0.0 {
                report.asymptotic_gain = Some(f0 * v_tail_max * r.row.zf_sup);
            }
            report.unbounded = fail.is_none() && aux.bound.is_zero() && f0 == 0.0;
            report.q = Some(matrix_rows(&ellipsoid_region(v_t0, report.radius)?.q));
        }
        _ => report.reasons.push(if f0 > 0.0 {
            "forcing too large: z_hat - F0 Z_F,s <= 0 for every admissible z_hat".into()
        } else {
            "no admissible z_hat gives a positive radius".into()
        }),
    }
    report.table = rows.into_iter().map(|r| r.row).collect();
    Ok(report)
}

fn argmax(rows: &[RowEval]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in rows.iter().enumerate() {
        if r.row.value.is_nan() {
            continue;
        }
        if best.map_or(true, |b| r.row.value > rows[b].row.value) {
            best = Some(i);
        }
    }
    best
}

/// Max of `|V(t)|` over the last 20% of the grid.
pub fn tail_max(grid: &[f64], v_norm: &[f64]) -> f64 {
    let t_cut = grid[0] + 0.8 * (grid[grid.len() - 1] - grid[0]);
    grid.iter()
        .zip(v_norm)
        .filter(|(t, _)| **t >= t_cut)
        .map(|(_, v)| *v)
        .fold(0.0, f64::max)
}

/// Stability region from the homogeneous linearized equation:
/// radius = sup over admissible `z_hat` of `z_hat / Z_h,s(z_hat)`.
pub fn local_stability_region(aux: &AuxEquation, v_t0: &CMat, opts: &RegionOptions) -> Result<RegionReport> {
    zhat_region(aux, 0.0, RegionKind::Stability, v_t0, 0.0, opts)
}

/// Bounded region with forcing: radius = sup of `(z_hat - F0 Z_F,s) / Z_h,s`.
/// `v_norm` is `|V_K(t)|` on the aux grid (for the asymptotic gain).
pub fn local_bounded_region(
    aux: &AuxEquation,
    v_t0: &CMat,
    v_norm: &[f64],
    opts: &RegionOptions,
) -> Result<RegionReport> {
    if v_norm.len() != aux.grid.len() {
        return invalid_input("transform norm path must share the aux grid");
    }
    zhat_region(aux, aux.f0, RegionKind::Bounded, v_t0, tail_max(&aux.grid, v_norm), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aux_ode::Variant;
    use crate::path::uniform_grid;
    use crate::transform_chain::PolyBound;

    fn aux_const(lin: f64, cubic: f64, forcing: f64) -> AuxEquation {
        let grid = uniform_grid(0.0, 50.0, 0.05);
        let n = grid.len();
        let bound = if cubic > 0.0 {
            PolyBound::new(grid.clone(), vec![vec![cubic; n]], vec![3]).unwrap()
        } else {
            PolyBound::zero(grid.clone())
        };
        let (v, f0) = if forcing > 0.0 { (Variant::Hat33, forcing) } else { (Variant::Hom34, 0.0) };
        AuxEquation::new(v, grid, vec![lin; n], vec![0.0; n], bound, vec![forcing; n], f0).unwrap()
    }

    #[test]
    fn classify_examples() {
        let grid = uniform_grid(0.0, 200.0, 0.01);
        let c = |f: &dyn Fn(f64) -> f64| {
            let mu: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
            classify_stability(&grid, &mu, &ClassifyOptions::default()).unwrap()
        };
        let v = c(&|_| -1.0);
        assert_eq!(v.classification, Classification::AsymptoticallyStable);
        assert!((v.phi + 1.0).abs() < 1e-12);
        assert_eq!(c(&|_| 0.0).classification, Classification::Stable);
        assert_eq!(c(&|t| t.sin()).classification, Classification::Stable);
        assert_eq!(c(&|_| 0.1).classification, Classification::Inconclusive);
    }

    #[test]
    fn linear_region_is_global() {
        let aux = aux_const(-1.0, 0.0, 0.0);
        let r = local_stability_region(&aux, &CMat::identity(2, 2), &RegionOptions::default()).unwrap();
        assert!(r.unbounded);
        for row in &r.table {
            assert!((row.value - row.z_hat).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_cubic_region_tends_to_one() {
        let aux = aux_const(-1.0, 1.0, 0.0);
        let r = local_stability_region(&aux, &CMat::identity(2, 2), &RegionOptions::default()).unwrap();
        assert!(!r.unbounded);
        assert!(r.radius <= 1.0 + 1e-9 && r.radius > 0.998, "radius {}", r.radius);
    }

    #[test]
    fn bounded_region_with_unit_forcing() {
        let aux = aux_const(-1.0, 0.0, 0.2);
        let grid = aux.grid.clone();
        let r = local_bounded_region(&aux, &CMat::identity(1, 1), &vec![1.0; grid.len()], &RegionOptions::default()).unwrap();
        for row in &r.table {
            // Z_F,s -> 1 - e^-50 and value = z_hat - F0 Z_F,s
            assert!((row.zf_sup - 1.0).abs() < 1e-9);
            assert!((row.value - (row.z_hat - 0.2 * row.zf_sup)).abs() < 1e-9);
        }
        assert!((r.asymptotic_gain.unwrap() - 0.2).abs() < 1e-9);
    }

    #[test]
    fn large_forcing_empties_region() {
        let aux = aux_const(-1.0, 0.0, 10.0);
        let opts = RegionOptions { z_cap: 1.0, ..Default::default() };
        let r = local_bounded_region(&aux, &CMat::identity(1, 1), &vec![1.0; aux.grid.len()], &opts).unwrap();
        assert!(r.empty);
        assert_eq!(r.radius, 0.0);
    }

    #[test]
    fn unforced_bounded_equals_stability() {
        let aux = aux_const(-0.5, 2.0, 0.0);
        let v = CMat::identity(2, 2);
        let a = local_stability_region(&aux, &v, &RegionOptions::default()).unwrap();
        let mut b = local_bounded_region(&aux, &v, &vec![1.0; aux.grid.len()], &RegionOptions::default()).unwrap();
        b.kind = a.kind;
        assert_eq!(a, b);
    }
}
