//! Browser demo: three operations on the benchmark presets, returned as JSON
//! for the static page in `www/`.

use auxbound::aux_ode::{bound_path, full_integrate, integrate_aux_partial, Variant};
use auxbound::criteria::{ellipsoid_region, nonlocal_threshold, project, ThresholdMode, ThresholdOptions};
use auxbound::dichotomy::{delta_grid, window_scan, ScanOptions};
use auxbound::ode::OdeOptions;
use auxbound::path::{interp, uniform_grid};
use auxbound::pipeline::{analyze, Analysis, AnalysisConfig};
use auxbound::systems::{default_x0_direction, preset, PresetTask, SystemSpec, PRESET_NAMES};
use serde::Serialize;
use wasm_bindgen::prelude::*;

// coarser than the CLI defaults so a click stays interactive
const GRID_STEP: f64 = 0.02;

type Result<T> = std::result::Result<T, auxbound::Error>;

#[derive(Debug, Serialize)]
pub struct PresetInfo {
    pub name: &'static str,
    pub task: PresetTask,
    pub delta: f64,
}

#[derive(Debug, Serialize)]
pub struct ScanCurve {
    pub delta: Vec<f64>,
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub best_delta: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct BoundCurve {
    pub t: Vec<f64>,
    pub norm: Vec<f64>,
    /// `None` past the escape time of the auxiliary solution.
    pub bound: Vec<Option<f64>>,
    pub escaped_at: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct RegionCurve {
    pub mode: ThresholdMode,
    pub z_bar: f64,
    pub at_cap: bool,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

fn lookup(name: &str) -> Result<(SystemSpec, f64, PresetTask)> {
    let p = preset(name).ok_or_else(|| auxbound::Error::InvalidConfig(format!("unknown preset {name:?}")))?;
    Ok((p.system()?, p.delta, p.task))
}

fn analysis(sys: &SystemSpec, delta: f64, horizon: f64) -> Result<Analysis> {
    analyze(sys, &AnalysisConfig { delta, horizon, grid_step: GRID_STEP, quad_step: GRID_STEP, ..Default::default() })
}

pub fn preset_list() -> Vec<PresetInfo> {
    PRESET_NAMES
        .iter()
        .filter_map(|n| preset(n))
        .map(|p| PresetInfo { name: p.name, task: p.task, delta: p.delta })
        .collect()
}

pub fn scan_curve_impl(name: &str, start: f64, end: f64, step: f64, horizon: f64) -> Result<ScanCurve> {
    let (sys, _, _) = lookup(name)?;
    let deltas = delta_grid(start, end, step)?;
    let opts = ScanOptions { grid_step: GRID_STEP, quad_step: GRID_STEP, parallel: false, ..Default::default() };
    let table = window_scan(&sys, &deltas, horizon, 1, &opts)?;
    Ok(ScanCurve {
        delta: table.rows.iter().map(|r| r.delta).collect(),
        phi1: table.rows.iter().map(|r| r.phi1).collect(),
        phi2: table.rows.iter().map(|r| r.phi2).collect(),
        best_delta: table.best().map(|r| r.delta),
    })
}

pub fn bound_curve_impl(name: &str, x0_norm: f64, horizon: f64) -> Result<BoundCurve> {
    let (sys, delta, _) = lookup(name)?;
    let an = analysis(&sys, delta, horizon)?;
    let x0: Vec<f64> = default_x0_direction().iter().map(|v| v * x0_norm).collect();
    let aux = an.aux(&sys, Variant::Hat33)?;
    let tr = integrate_aux_partial(&aux, an.z0(&x0), (sys.t0, sys.t0 + horizon), &OdeOptions::default())?;
    let b = bound_path(an.stage(), &tr)?;
    let t = uniform_grid(sys.t0, sys.t0 + horizon, 0.1);
    let full = full_integrate(&sys, &x0, &t, &OdeOptions::default())?;
    let t_last = tr.t[tr.t.len() - 1];
    let bound = full.t.iter().map(|&s| (s <= t_last).then(|| interp(&tr.t, &b, s))).collect();
    Ok(BoundCurve { t: full.t, norm: full.norm, bound, escaped_at: tr.diverged_at })
}

pub fn region_curve_impl(name: &str, horizon: f64, points: usize) -> Result<RegionCurve> {
    let (sys, delta, task) = lookup(name)?;
    let an = analysis(&sys, delta, horizon)?;
    let (mode, variant) = match task {
        PresetTask::TrappingRegion => (ThresholdMode::Trapping, Variant::Hat33),
        _ => (ThresholdMode::Stability, Variant::Hom34),
    };
    let aux = an.aux(&sys, variant)?;
    let th = nonlocal_threshold(&aux, mode, &ThresholdOptions::default())?;
    let e = ellipsoid_region(&an.stage().v_cum.values()[0], th.z_bar)?;
    let p = project(&e, 0, 1, points)?;
    Ok(RegionCurve {
        mode,
        z_bar: th.z_bar,
        at_cap: th.at_cap,
        x1: p.boundary.iter().map(|q| q[0]).collect(),
        x2: p.boundary.iter().map(|q| q[1]).collect(),
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn presets() -> String {
    serde_json::to_string(&preset_list()).unwrap_or_default()
}

/// φ₁, φ₂ against the window length.
#[wasm_bindgen]
pub fn scan_curve(name: &str, start: f64, end: f64, step: f64, horizon: f64) -> std::result::Result<String, JsError> {
    to_js(scan_curve_impl(name, start, end, step, horizon))
}

/// ‖x(t)‖ and the auxiliary bound for the documented start direction.
#[wasm_bindgen]
pub fn bound_curve(name: &str, x0_norm: f64, horizon: f64) -> std::result::Result<String, JsError> {
    to_js(bound_curve_impl(name, x0_norm, horizon))
}

/// Nonlocal region projected on the (x₁, x₂) plane.
#[wasm_bindgen]
pub fn region_curve(name: &str, horizon: f64, points: usize) -> std::result::Result<String, JsError> {
    to_js(region_curve_impl(name, horizon, points))
}
