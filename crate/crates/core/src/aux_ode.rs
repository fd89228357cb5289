//! Scalar auxiliary equations `z' = (alpha_max + |G|) z + L(t, z) + |F_k(t)|`,
//! their integration, the full-system oracle and the closed-form solution of
//! the linearized equation.

use serde::{Deserialize, Serialize};

use crate::dichotomy::integral_to;
use crate::error::{invalid_config, invalid_input, Error, Result};
use crate::linalg::to_complex;
use crate::ode::{solve, OdeOptions, SolverStats};
use crate::path::{cubic_interp, cumulative_cubic, locate, resample, validate_grid};
use crate::systems::{Forcing, SystemSpec};
use crate::transform_chain::{linearize_bound, ChainStage, PolyBound};

/// Which residual norm and forcing enter the equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `|G|` with forcing.
    Full32,
    /// `|G^|` with forcing.
    Hat33,
    /// `|G^|` without forcing.
    Hom34,
}

impl Variant {
    pub fn uses_hat(self) -> bool {
        !matches!(self, Variant::Full32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxEquation {
    pub variant: Variant,
    pub grid: Vec<f64>,
    pub alpha_max: Vec<f64>,
    /// `|G|` or `|G^|` depending on the variant.
    pub g_norm: Vec<f64>,
    pub bound: PolyBound,
    /// `|V_k^-1(t) F(t)|`.
    pub forcing_norm: Vec<f64>,
    pub f0: f64,
}

impl AuxEquation {
    pub fn new(
        variant: Variant,
        grid: Vec<f64>,
        alpha_max: Vec<f64>,
        g_norm: Vec<f64>,
        bound: PolyBound,
        forcing_norm: Vec<f64>,
        f0: f64,
    ) -> Result<Self> {
        validate_grid(&grid, 2)?;
        let n = grid.len();
        if alpha_max.len() != n || g_norm.len() != n || forcing_norm.len() != n || bound.grid != grid {
            return invalid_input("auxiliary coefficient paths must share the grid");
        }
        if forcing_norm.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return invalid_input("forcing norm must be finite and nonnegative");
        }
        if alpha_max.iter().chain(&g_norm).any(|v| !v.is_finite()) {
            return invalid_input("coefficient paths must be finite");
        }
        if !(f0 >= 0.0 && f0.is_finite()) {
            return invalid_input("F0 must be finite and nonnegative");
        }
        if variant == Variant::Hom34 && (f0 > 0.0 || forcing_norm.iter().any(|&v| v > 0.0)) {
            return invalid_config("the homogeneous variant takes no forcing");
        }
        Ok(Self { variant, grid, alpha_max, g_norm, bound, forcing_norm, f0 })
    }

    /// Linear coefficient `alpha_max + |G|`.
    pub fn linear_coeff(&self) -> Vec<f64> {
        self.alpha_max.iter().zip(&self.g_norm).map(|(a, g)| a + g).collect()
    }

    /// `mu(t, z_hat) = alpha_max + |G| + l(t, z_hat)`.
    pub fn mu(&self, z_hat: f64) -> Result<Vec<f64>> {
        let l = linearize_bound(&self.bound, z_hat)?;
        Ok(self.linear_coeff().iter().zip(&l).map(|(a, b)| a + b).collect())
    }

    pub fn rhs(&self, t: f64, z: f64) -> f64 {
        let g = &self.grid;
        let (i, w) = if t <= g[0] {
            (0, 0.0)
        } else if t >= g[g.len() - 1] {
            (g.len() - 2, 1.0)
        } else {
            let i = locate(g, t);
            (i, (t - g[i]) / (g[i + 1] - g[i]))
        };
        let lerp = |v: &[f64]| v[i] + w * (v[i + 1] - v[i]);
        let lin = lerp(&self.alpha_max) + lerp(&self.g_norm);
        let mut nl = 0.0;
        for (c, &d) in self.bound.coeffs.iter().zip(&self.bound.degrees) {
            nl += lerp(c) * z.powi(d as i32);
        }
        lin * z + nl + lerp(&self.forcing_norm)
    }

    pub fn t_start(&self) -> f64 {
        self.grid[0]
    }

    pub fn t_end(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }
}

/// Assembles the auxiliary equation of a stage.
pub fn build_aux(
    stage: &ChainStage,
    bound: PolyBound,
    forcing: &Forcing,
    variant: Variant,
) -> Result<AuxEquation> {
    let n = stage.v_cum.dim();
    let f0 = forcing.f0(n);
    if variant == Variant::Hom34 && f0 > 0.0 {
        return invalid_config(format!("the homogeneous variant was given forcing F0 = {f0}"));
    }
    let forcing_norm: Vec<f64> = if f0 == 0.0 {
        vec![0.0; stage.grid.len()]
    } else {
        stage
            .grid
            .iter()
            .zip(stage.v_cum_inv.values())
            .map(|(&t, vi)| {
                let f = nalgebra::DMatrix::from_column_slice(n, 1, forcing.value(t, n).as_slice());
                (vi * to_complex(&f)).norm()
            })
            .collect()
    };
    let g = if variant.uses_hat() { &stage.g_hat_norm } else { &stage.g_norm };
    AuxEquation::new(
        variant,
        stage.grid.clone(),
        stage.alpha_max.clone(),
        g.clone(),
        bound,
        forcing_norm,
        f0,
    )
}

/// Scalar trajectory on the coefficient grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub z: Vec<f64>,
    pub stats: SolverStats,
    pub rtol: f64,
    /// Blow-up time when the cap was crossed.
    pub diverged_at: Option<f64>,
}

fn span_outputs(grid: &[f64], span: (f64, f64)) -> Result<Vec<f64>> {
    let (a, b) = span;
    if !(b > a) || a < grid[0] - 1e-12 || b > grid[grid.len() - 1] + 1e-12 {
        return invalid_input(format!(
            "span [{a}, {b}] is not inside the coefficient grid [{}, {}]",
            grid[0],
            grid[grid.len() - 1]
        ));
    }
    let mut out = vec![a];
    out.extend(grid.iter().cloned().filter(|&t| t > a && t < b));
    out.push(b);
    Ok(out)
}

/// Integrates the auxiliary equation and keeps the part before a blow-up.
pub fn integrate_aux_partial(
    aux: &AuxEquation,
    z0: f64,
    span: (f64, f64),
    opts: &OdeOptions,
) -> Result<Trajectory> {
    if !(z0 >= 0.0 && z0.is_finite()) {
        return invalid_input("z0 must be finite and nonnegative");
    }
    let outputs = span_outputs(&aux.grid, span)?;
    let o = OdeOptions { floor_zero: true, stop_at_outputs: true, ..*opts };
    let sol = solve(|t, z, dz| dz[0] = aux.rhs(t, z[0]), &[z0], &outputs, &o)?;
    Ok(Trajectory {
        t: sol.t,
        z: sol.y.into_iter().map(|v| v[0]).collect(),
        stats: sol.stats,
        rtol: opts.rtol,
        diverged_at: sol.diverged_at,
    })
}

/// Integrates the auxiliary equation; crossing the cap is an error.
pub fn integrate_aux(aux: &AuxEquation, z0: f64, span: (f64, f64), opts: &OdeOptions) -> Result<Trajectory> {
    let tr = integrate_aux_partial(aux, z0, span, opts)?;
    match tr.diverged_at {
        Some(t) => Err(Error::Diverged { t }),
        None => Ok(tr),
    }
}

/// Full-system trajectory with its Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct FullTrajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub norm: Vec<f64>,
    pub stats: SolverStats,
}

/// Integrates `x' = B(t)x + f(t, x) + F(t)` and reports the state at `outputs`.
pub fn full_integrate(
    system: &SystemSpec,
    x0: &[f64],
    outputs: &[f64],
    opts: &OdeOptions,
) -> Result<FullTrajectory> {
    if x0.len() != system.dim() {
        return invalid_input("initial vector has the wrong dimension");
    }
    let o = OdeOptions { floor_zero: false, ..*opts };
    let sol = solve(|t, x, dx| system.rhs(t, x, dx), x0, outputs, &o)?;
    if let Some(t) = sol.diverged_at {
        return Err(Error::Diverged { t });
    }
    let norm = sol.y.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    Ok(FullTrajectory { t: sol.t, x: sol.y, norm, stats: sol.stats })
}

/// `b(t) = |V_k(t)| z(t)` at the trajectory times.
pub fn bound_path(stage: &ChainStage, traj: &Trajectory) -> Result<Vec<f64>> {
    bound_from_norms(&stage.grid, &stage.v_cum_norm, traj)
}

pub fn bound_from_norms(grid: &[f64], v_norm: &[f64], traj: &Trajectory) -> Result<Vec<f64>> {
    let vn = resample(grid, v_norm, &traj.t, 1e-9)?;
    Ok(vn.iter().zip(&traj.z).map(|(v, z)| v * z).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    /// `min_t (b(t) - |x(t)|)`.
    pub min_margin: f64,
    pub t_at_min: f64,
    /// Samples with margin below `-tol`.
    pub violations: usize,
    pub samples: usize,
    pub tol: f64,
}

/// Compares a norm path against a bound path (resampled onto the norm times).
pub fn check_bound(
    norm_t: &[f64],
    norm: &[f64],
    bound_t: &[f64],
    bound: &[f64],
    tol: f64,
) -> Result<MarginReport> {
    if norm_t.len() != norm.len() || bound_t.len() != bound.len() || norm.is_empty() || bound_t.len() < 2 {
        return invalid_input("norm and bound paths must be non-empty and consistent");
    }
    let b = resample(bound_t, bound, norm_t, 1e-9)?;
    let mut report = MarginReport {
        min_margin: f64::INFINITY,
        t_at_min: norm_t[0],
        violations: 0,
        samples: norm.len(),
        tol,
    };
    for ((&t, &x), &bb) in norm_t.iter().zip(norm).zip(&b) {
        let m = bb - x;
        if m < report.min_margin {
            report.min_margin = m;
            report.t_at_min = t;
        }
        if m < -tol {
            report.violations += 1;
        }
    }
    Ok(report)
}

/// Closed-form solution data of the linearized equation `Z' = mu Z + |F_k|`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedSolution {
    pub grid: Vec<f64>,
    pub mu: Vec<f64>,
    /// `exp(int_t0^t mu)`.
    pub zh: Vec<f64>,
    /// Response to the unit-amplitude forcing `|F_k| / F0`.
    pub zf: Vec<f64>,
    pub zh_sup: f64,
    pub zf_sup: f64,
    /// Time average of `mu` over the whole grid.
    pub mean_mu: f64,
    /// `mean_mu < 0`: the sups are not still growing at the horizon.
    pub certified_on_horizon: bool,
}

impl LinearizedSolution {
    /// `Z(t) = z0 Z_h(t) + F0 Z_F(t)`.
    pub fn z(&self, z0: f64, f0: f64) -> Vec<f64> {
        self.zh.iter().zip(&self.zf).map(|(h, f)| z0 * h + f0 * f).collect()
    }
}

pub fn linear_solution(grid: &[f64], mu: &[f64], forcing_norm: &[f64], f0: f64) -> Result<LinearizedSolution> {
    validate_grid(grid, 2)?;
    if mu.len() != grid.len() || forcing_norm.len() != grid.len() {
        return invalid_input("paths must share the grid");
    }
    if mu.iter().chain(forcing_norm).any(|v| !v.is_finite()) {
        return invalid_input("paths must be finite");
    }
    let forced = forcing_norm.iter().any(|&v| v != 0.0);
    if f0 == 0.0 && forced {
        return invalid_input("F0 = 0 with a nonzero forcing path");
    }
    let zh: Vec<f64> = cumulative_cubic(grid, mu).iter().map(|s| s.exp()).collect();
    let zf = if forced {
        let unit: Vec<f64> = forcing_norm.iter().map(|v| v / f0).collect();
        let rhs = |t: f64, z: &[f64], dz: &mut [f64]| {
            dz[0] = cubic_interp(grid, mu, t) * z[0] + cubic_interp(grid, &unit, t);
        };
        let opts = OdeOptions {
            rtol: 1e-11,
            atol: 1e-14,
            cap: f64::MAX,
            stop_at_outputs: true,
            ..Default::default()
        };
        let sol = solve(rhs, &[0.0], grid, &opts)?;
        sol.y.into_iter().map(|v| v[0]).collect()
    } else {
        vec![0.0; grid.len()]
    };
    let span = grid[grid.len() - 1] - grid[0];
    let mean_mu = integral_to(grid, mu, grid[grid.len() - 1]) / span;
    Ok(LinearizedSolution {
        zh_sup: zh.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        zf_sup: zf.iter().cloned().fold(0.0, f64::max),
        grid: grid.to_vec(),
        mu: mu.to_vec(),
        zh,
        zf,
        mean_mu,
        certified_on_horizon: mean_mu < 0.0,
    })
}
