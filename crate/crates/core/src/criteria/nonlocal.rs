use serde::{Deserialize, Serialize};

use crate::aux_ode::{integrate_aux_partial, AuxEquation, Variant};
use crate::error::{invalid_config, invalid_input, Result};
use crate::ode::OdeOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Trajectory stays below `growth_cap * z0` and ends at or below `z0`.
    Stability,
    /// Trajectory never leaves `[0, z0]`.
    Trapping,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdOptions {
    pub z_cap: f64,
    /// Relative bisection tolerance.
    pub rel_tol: f64,
    pub growth_cap: f64,
    /// Points of the coarse geometric scan over `[z_cap * 1e-6, z_cap]`.
    pub scan_points: usize,
    pub ode: OdeOptions,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self { z_cap: 1e3, rel_tol: 1e-4, growth_cap: 1e3, scan_points: 25, ode: OdeOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub mode: ThresholdMode,
    pub z_bar: f64,
    /// The predicate still held at `z_cap`: the threshold is at least the cap.
    pub at_cap: bool,
    /// Predicate at `z_bar (1 - rel_tol)` and `z_bar (1 + rel_tol)`.
    pub below_ok: Option<bool>,
    pub above_ok: Option<bool>,
    pub rel_tol: f64,
    pub horizon: f64,
    pub evaluations: usize,
}

struct Probe<'a> {
    aux: &'a AuxEquation,
    mode: ThresholdMode,
    opts: &'a ThresholdOptions,
    count: usize,
}

impl Probe<'_> {
    fn holds(&mut self, z0: f64) -> Result<bool> {
        self.count += 1;
        let span = (self.aux.t_start(), self.aux.t_end());
        let ode = OdeOptions { cap: self.opts.ode.cap.max(10.0 * self.opts.growth_cap * z0), ..self.opts.ode };
        let tr = integrate_aux_partial(self.aux, z0, span, &ode)?;
        if tr.diverged_at.is_some() {
            return Ok(false);
        }
        let sup = tr.z.iter().cloned().fold(0.0, f64::max);
        let end = tr.z[tr.z.len() - 1];
        Ok(match self.mode {
            ThresholdMode::Stability => sup <= self.opts.growth_cap * z0 && end <= z0 * (1.0 + 1e-9),
            ThresholdMode::Trapping => sup <= z0 * (1.0 + 1e-9),
        })
    }
}

/// Largest `z0 <= z_cap` whose auxiliary trajectory satisfies the mode
/// predicate over the coefficient horizon.
pub fn nonlocal_threshold(aux: &AuxEquation, mode: ThresholdMode, opts: &ThresholdOptions) -> Result<ThresholdReport> {
    if !(opts.z_cap > 0.0 && opts.z_cap.is_finite() && opts.rel_tol > 0.0 && opts.rel_tol < 0.5) {
        return invalid_input("threshold search needs z_cap > 0 and 0 < rel_tol < 0.5");
    }
    if opts.scan_points < 2 {
        return invalid_input("coarse scan needs at least 2 points");
    }
    match (mode, aux.variant) {
        (ThresholdMode::Stability, Variant::Hom34) | (ThresholdMode::Trapping, Variant::Hat33) => {}
        _ => return invalid_config("stability thresholds use the homogeneous variant, trapping the hat variant"),
    }
    let mut probe = Probe { aux, mode, opts, count: 0 };
    let horizon = aux.t_end() - aux.t_start();
    let mut report = ThresholdReport {
        mode,
        z_bar: opts.z_cap,
        at_cap: true,
        below_ok: None,
        above_ok: None,
        rel_tol: opts.rel_tol,
        horizon,
        evaluations: 0,
    };
    if probe.holds(opts.z_cap)? {
        report.evaluations = probe.count;
        return Ok(report);
    }
    report.at_cap = false;

    let lo = opts.z_cap * 1e-6;
    let n = opts.scan_points;
    let ratio = (opts.z_cap / lo).powf(1.0 / (n - 1) as f64);
    let pts: Vec<f64> = (0..n).map(|i| lo * ratio.powi(i as i32)).collect();
    let mut last_true = None;
    for (i, &z) in pts.iter().enumerate().take(n - 1) {
        if probe.holds(z)? {
            last_true = Some(i);
        }
    }
    let Some(i) = last_true else {
        report.z_bar = 0.0;
        report.evaluations = probe.count;
        return Ok(report);
    };
    let (mut a, mut b) = (pts[i], pts[i + 1]);
    while (b - a) > 0.25 * opts.rel_tol * a {
        let mid = 0.5 * (a + b);
        if probe.holds(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    report.z_bar = a;
    report.below_ok = Some(probe.holds(a * (1.0 - opts.rel_tol))?);
    report.above_ok = Some(probe.holds(a * (1.0 + opts.rel_tol))?);
    report.evaluations = probe.count;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::uniform_grid;
    use crate::transform_chain::PolyBound;

    fn bernoulli(variant: Variant, forcing: f64, cubic: f64) -> AuxEquation {
        let grid = uniform_grid(0.0, 30.0, 0.1);
        let n = grid.len();
        let bound = PolyBound::new(grid.clone(), vec![vec![cubic; n]], vec![3]).unwrap();
        AuxEquation::new(variant, grid, vec![-1.0; n], vec![0.0; n], bound, vec![forcing; n], forcing).unwrap()
    }

    #[test]
    fn cubic_threshold_is_one() {
        let r = nonlocal_threshold(&bernoulli(Variant::Hom34, 0.0, 1.0), ThresholdMode::Stability, &Default::default()).unwrap();
        assert!(!r.at_cap);
        assert!((r.z_bar - 1.0).abs() < 1e-4, "{}", r.z_bar);
        assert_eq!((r.below_ok, r.above_ok), (Some(true), Some(false)));
    }

    #[test]
    fn linear_reaches_cap() {
        let r = nonlocal_threshold(&bernoulli(Variant::Hom34, 0.0, 0.0), ThresholdMode::Stability, &Default::default()).unwrap();
        assert!(r.at_cap);
        assert_eq!(r.z_bar, 1e3);
    }

    #[test]
    fn trapping_with_forcing() {
        // z' = -z + z^3 + 0.1: trapped between the two positive equilibria
        let r = nonlocal_threshold(&bernoulli(Variant::Hat33, 0.1, 1.0), ThresholdMode::Trapping, &Default::default()).unwrap();
        let upper = {
            // largest root of z^3 - z + 0.1
            let mut z: f64 = 1.0;
            for _ in 0..50 {
                z -= (z * z * z - z + 0.1) / (3.0 * z * z - 1.0);
            }
            z
        };
        assert!((r.z_bar - upper).abs() < 1e-3 * upper, "{} vs {}", r.z_bar, upper);
    }

    #[test]
    fn wrong_variant_rejected() {
        assert!(nonlocal_threshold(&bernoulli(Variant::Hat33, 0.1, 1.0), ThresholdMode::Stability, &Default::default()).is_err());
    }
}
