//! End-to-end assembly: system -> moving-average split -> transform chain ->
//! auxiliary equation.

use serde::{Deserialize, Serialize};

use crate::aux_ode::{build_aux, AuxEquation, Variant};
use crate::dichotomy::{moving_average_split, DichotomyConfig};
use crate::error::{invalid_config, Result};
use crate::linalg::MatrixPath;
use crate::path::uniform_grid;
use crate::systems::SystemSpec;
use crate::transform_chain::{build_chain, push_nonlinearity, ChainStage, PolyBound, StageOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Scalar moving-average window.
    pub delta: f64,
    pub horizon: f64,
    pub grid_step: f64,
    pub quad_step: f64,
    /// Chain depth K.
    pub depth: usize,
    pub gap_rel: f64,
    pub cond_max: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            delta: 6.0,
            horizon: 100.0,
            grid_step: 0.01,
            quad_step: 0.01,
            depth: 1,
            gap_rel: 1e-6,
            cond_max: 1e6,
        }
    }
}

impl AnalysisConfig {
    pub fn stage_options(&self) -> StageOptions {
        StageOptions { gap_rel: self.gap_rel, cond_max: self.cond_max, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return invalid_config("horizon must be positive");
        }
        if !(self.grid_step > 0.0 && self.grid_step < self.horizon) {
            return invalid_config("grid step must be positive and below the horizon");
        }
        if self.depth == 0 {
            return invalid_config("chain depth must be at least 1");
        }
        if !(self.gap_rel > 0.0 && self.cond_max > 0.0) {
            return invalid_config("eigen thresholds must be positive");
        }
        Ok(())
    }
}

/// Everything derived from the linear block on the analysis grid.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub grid: Vec<f64>,
    pub a0: MatrixPath,
    pub g0: MatrixPath,
    pub stages: Vec<ChainStage>,
    /// Nonlinearity bound in the coordinates of the last stage.
    pub bound: PolyBound,
}

impl Analysis {
    pub fn stage(&self) -> &ChainStage {
        self.stages.last().expect("chain has at least one stage")
    }

    pub fn aux(&self, system: &SystemSpec, variant: Variant) -> Result<AuxEquation> {
        let forcing = if variant == Variant::Hom34 { Default::default() } else { system.forcing.clone() };
        build_aux(self.stage(), self.bound.clone(), &forcing, variant)
    }

    /// `|V_K^-1(t0) x0|`.
    pub fn z0(&self, x0: &[f64]) -> f64 {
        let vi = &self.stage().v_cum_inv.values()[0];
        let x = nalgebra::DVector::from_iterator(x0.len(), x0.iter().map(|&v| num_complex::Complex64::new(v, 0.0)));
        (vi * x).norm()
    }
}

pub fn analyze(system: &SystemSpec, cfg: &AnalysisConfig) -> Result<Analysis> {
    system.validate()?;
    cfg.validate()?;
    let t0 = system.t0;
    let grid = uniform_grid(t0, t0 + cfg.horizon, cfg.grid_step);
    let b = |t: f64| system.b_at(t);
    let (a0, g0) = moving_average_split(&b, &DichotomyConfig::scalar(cfg.delta, cfg.quad_step), &grid)?;
    let stages = build_chain(&a0, &g0, cfg.depth, &cfg.stage_options())?;
    let bound = push_nonlinearity(stages.last().expect("non-empty"), &system.nonlinearity)?;
    Ok(Analysis { grid, a0, g0, stages, bound })
}
