use auxbound::aux_ode::{bound_path, check_bound, full_integrate, integrate_aux_partial, Variant};
use auxbound::criteria::{
    ellipsoid_region, local_bounded_region, local_stability_region, nonlocal_threshold, project, Ellipsoid, RegionOptions,
    RegionReport, ThresholdMode, ThresholdOptions, ThresholdReport,
};
use auxbound::dichotomy::{delta_grid, window_scan, ScanOptions, ScanRow};
use auxbound::ode::OdeOptions;
use auxbound::path::{interp, uniform_grid};
use auxbound::pipeline::{analyze, Analysis, AnalysisConfig};
use auxbound::systems::{default_x0_direction, preset, PresetTask, PRESET_NAMES};
use auxbound::transform_chain::{stage_rows, ChainStage, StageOptions};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{resolve, RegionMode, Resolved, RunConfig, SystemSource};
use crate::error::{CliError, Result};
use crate::output::{conventions, json, num, Bundle, Csv, Metadata};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Scan,
    Bound,
    Region,
}

fn metadata(cfg: &RunConfig, r: &Resolved, command: &str, delta: String) -> Metadata {
    Metadata {
        tool: format!("auxbound {}", env!("CARGO_PKG_VERSION")),
        command: command.to_string(),
        config_sha256: cfg.hash(),
        system: r.label.clone(),
        kappa: r.kappa(),
        delta,
        rtol: cfg.tolerances.rtol,
        atol: cfg.tolerances.atol,
        margin_tol: cfg.tolerances.margin,
        horizon: cfg.horizon,
        seed: cfg.seed,
        conventions: conventions(),
    }
}

fn ode(cfg: &RunConfig) -> OdeOptions {
    OdeOptions { rtol: cfg.tolerances.rtol, atol: cfg.tolerances.atol, ..Default::default() }
}

fn analysis(cfg: &RunConfig, r: &Resolved) -> Result<Analysis> {
    let ac = AnalysisConfig {
        delta: r.delta,
        horizon: cfg.horizon,
        grid_step: cfg.grid_step,
        quad_step: cfg.quad_step,
        depth: cfg.depth,
        ..Default::default()
    };
    Ok(analyze(&r.system, &ac)?)
}

pub fn stage_csv(meta: &Metadata, stage: &ChainStage) -> String {
    let mut csv = Csv::new(meta, &["t", "alpha_max", "norm_G", "norm_Ghat", "norm_Vinv", "norm_V"]);
    for row in stage_rows(stage) {
        csv.nums(&row);
    }
    csv.into_string()
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<Bundle> {
    let r = resolve(cfg)?;
    match command {
        Command::Scan => scan(cfg, &r),
        Command::Bound => bound(cfg, &r),
        Command::Region => region(cfg, &r),
    }
}

#[derive(Serialize)]
struct Argmin {
    delta: f64,
    phi1: f64,
    phi2: f64,
}

#[derive(Serialize)]
struct ScanSummary {
    rows: usize,
    objective: auxbound::dichotomy::Objective,
    best_delta: Option<f64>,
    argmin_phi1: Option<Argmin>,
    argmin_phi2: Option<Argmin>,
    irregular_deltas: Vec<f64>,
    unconverged_deltas: Vec<f64>,
    phi2_le_phi1_everywhere: bool,
}

fn scan(cfg: &RunConfig, r: &Resolved) -> Result<Bundle> {
    let s = &cfg.scan;
    let deltas = delta_grid(s.start, s.end, s.step)?;
    let opts = ScanOptions {
        grid_step: cfg.grid_step,
        quad_step: cfg.quad_step,
        objective: s.objective,
        stage: StageOptions::default(),
        ..Default::default()
    };
    let table = window_scan(&r.system, &deltas, cfg.horizon, cfg.depth, &opts)?;
    let meta = metadata(cfg, r, "scan", format!("{}:{}:{}", num(s.start), num(s.step), num(s.end)));

    let mut csv = Csv::new(&meta, &["delta", "phi1", "phi2", "converged"]);
    for row in &table.rows {
        csv.row(&[num(row.delta), num(row.phi1), num(row.phi2), row.converged.to_string()]);
    }
    let pick = |i: Option<usize>| {
        i.map(|i| {
            let row: &ScanRow = &table.rows[i];
            Argmin { delta: row.delta, phi1: row.phi1, phi2: row.phi2 }
        })
    };
    let regular = table.rows.iter().filter(|r| !r.irregular);
    let summary = ScanSummary {
        rows: table.rows.len(),
        objective: table.objective,
        best_delta: table.best().map(|r| r.delta),
        argmin_phi1: pick(table.argmin_phi1),
        argmin_phi2: pick(table.argmin_phi2),
        irregular_deltas: table.rows.iter().filter(|r| r.irregular).map(|r| r.delta).collect(),
        unconverged_deltas: table.rows.iter().filter(|r| !r.irregular && !r.converged).map(|r| r.delta).collect(),
        phi2_le_phi1_everywhere: regular.clone().all(|r| r.phi2 <= r.phi1),
    };
    let mut b = Bundle::default();
    b.add("scan.csv", csv.into_string());
    b.add("scan_summary.json", json(&meta, &summary));
    Ok(b)
}

fn initial_vector(cfg: &RunConfig, r: &Resolved) -> Result<Vec<f64>> {
    let n = r.system.dim();
    if let Some(x0) = &cfg.bound.x0 {
        if x0.len() != n || x0.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Config(format!("bound.x0 must hold {n} finite numbers")));
        }
        return Ok(x0.clone());
    }
    let dir: Vec<f64> = match cfg.seed {
        None if n == 4 && r.system.benchmark.is_some() => default_x0_direction().to_vec(),
        seed => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            w.iter().map(|v| v / s).collect()
        }
    };
    Ok(dir.iter().map(|v| v * cfg.bound.x0_norm).collect())
}

#[derive(Serialize)]
struct VariantMargin {
    variant: Variant,
    /// `min (bound - |x|)` over the samples where the bound is finite.
    min_margin: Option<f64>,
    t_at_min: Option<f64>,
    violations: usize,
    samples: usize,
    /// Time at which the auxiliary solution crossed the blow-up cap.
    escaped_at: Option<f64>,
    ok: bool,
}

#[derive(Serialize)]
struct MarginSummary {
    x0: Vec<f64>,
    z0: f64,
    f0: f64,
    variants: Vec<VariantMargin>,
    ok: bool,
}

fn bound(cfg: &RunConfig, r: &Resolved) -> Result<Bundle> {
    let an = analysis(cfg, r)?;
    let x0 = initial_vector(cfg, r)?;
    let z0 = an.z0(&x0);
    let t0 = r.system.t0;
    let span = (t0, t0 + cfg.horizon);
    let out = uniform_grid(span.0, span.1, cfg.bound.output_step);
    let full = full_integrate(&r.system, &x0, &out, &ode(cfg))?;

    let mut columns = Vec::new();
    let mut margins = Vec::new();
    for &v in &cfg.bound.variants {
        let aux = an.aux(&r.system, v)?;
        let tr = integrate_aux_partial(&aux, z0, span, &ode(cfg))?;
        let b = bound_path(an.stage(), &tr)?;
        let t_last = tr.t[tr.t.len() - 1];
        let col: Vec<f64> =
            full.t.iter().map(|&t| if t <= t_last { interp(&tr.t, &b, t) } else { f64::INFINITY }).collect();
        let (nt, nx): (Vec<f64>, Vec<f64>) = full.t.iter().zip(&full.norm).filter(|(t, _)| **t <= t_last).unzip();
        let report = if tr.t.len() >= 2 && !nt.is_empty() {
            Some(check_bound(&nt, &nx, &tr.t, &b, cfg.tolerances.margin)?)
        } else {
            None
        };
        margins.push(VariantMargin {
            variant: v,
            min_margin: report.as_ref().map(|m| m.min_margin),
            t_at_min: report.as_ref().map(|m| m.t_at_min),
            violations: report.as_ref().map_or(0, |m| m.violations),
            samples: report.as_ref().map_or(0, |m| m.samples),
            escaped_at: tr.diverged_at,
            ok: report.as_ref().map_or(true, |m| m.min_margin >= -cfg.tolerances.margin),
        });
        columns.push((v, col));
    }

    let meta = metadata(cfg, r, "bound", num(r.delta));
    let mut header = vec!["t".to_string(), "norm_x".to_string()];
    header.extend(columns.iter().map(|(v, _)| format!("bound_{}", variant_name(*v))));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&meta, &header);
    for (k, (&t, &n)) in full.t.iter().zip(&full.norm).enumerate() {
        let mut row = vec![t, n];
        row.extend(columns.iter().map(|(_, c)| c[k]));
        csv.nums(&row);
    }
    let summary = MarginSummary { ok: margins.iter().all(|m| m.ok), x0, z0, f0: r.system.f0(), variants: margins };
    let mut b = Bundle::default();
    b.add("norms.csv", csv.into_string());
    b.add("margin.json", json(&meta, &summary));
    b.add("stage.csv", stage_csv(&meta, an.stage()));
    Ok(b)
}

fn variant_name(v: Variant) -> String {
    serde_json::to_value(v).ok().and_then(|s| s.as_str().map(str::to_string)).unwrap_or_default()
}

fn auto_mode(r: &Resolved) -> RegionMode {
    match r.task {
        Some(PresetTask::StabilityRegion) => RegionMode::NonlocalStability,
        Some(PresetTask::TrappingRegion) => RegionMode::NonlocalTrapping,
        _ if r.system.forcing.is_zero() => RegionMode::LocalStability,
        _ => RegionMode::LocalBounded,
    }
}

#[derive(Serialize)]
struct RegionSummary {
    mode: RegionMode,
    /// Threshold on `|V^-1(t0) x0|`; null when the region is the whole space.
    radius: Option<f64>,
    unbounded: bool,
    empty: bool,
    /// Region `{x : x^T q x < radius^2}`.
    q: Vec<Vec<f64>>,
    axes: Vec<[usize; 2]>,
    local: RegionReport,
    threshold: Option<ThresholdReport>,
}

/// Boundary polyline of `{x : x^T q x < radius^2}` projected on the
/// one-based axes `(i, j)`.
pub fn boundary_csv(meta: &Metadata, q: &[Vec<f64>], radius: f64, axes: [usize; 2], points: usize) -> Result<String> {
    let [i, j] = axes;
    let mut csv = Csv::new(meta, &[&format!("x_{i}"), &format!("x_{j}")]);
    let n = q.len();
    if i > n || j > n {
        return Err(CliError::Config(format!("axis pair ({i}, {j}) exceeds dimension {n}")));
    }
    let e = Ellipsoid { q: DMatrix::from_fn(n, n, |a, b| q[a][b]), radius };
    let p = project(&e, i - 1, j - 1, points)?;
    for [a, b] in p.boundary {
        csv.nums(&[a, b]);
    }
    Ok(csv.into_string())
}

fn region(cfg: &RunConfig, r: &Resolved) -> Result<Bundle> {
    let an = analysis(cfg, r)?;
    let mode = match cfg.region.mode {
        RegionMode::Auto => auto_mode(r),
        m => m,
    };
    let stage = an.stage();
    let v0 = stage.v_cum.values()[0].clone();
    let opts = RegionOptions { z_cap: cfg.region.z_cap, ..Default::default() };
    let hom = matches!(mode, RegionMode::LocalStability | RegionMode::NonlocalStability);
    let aux = an.aux(&r.system, if hom { Variant::Hom34 } else { Variant::Hat33 })?;
    let local = if hom {
        local_stability_region(&aux, &v0, &opts)?
    } else {
        local_bounded_region(&aux, &v0, &stage.v_cum_norm, &opts)?
    };
    let threshold = match mode {
        RegionMode::NonlocalStability | RegionMode::NonlocalTrapping => {
            let tm = if hom { ThresholdMode::Stability } else { ThresholdMode::Trapping };
            let to = ThresholdOptions { z_cap: cfg.region.z_cap, rel_tol: cfg.region.rel_tol, ode: ode(cfg), ..Default::default() };
            Some(nonlocal_threshold(&aux, tm, &to)?)
        }
        _ => None,
    };
    let (unbounded, radius) = match &threshold {
        Some(t) => {
            let whole = an.bound.is_zero() && r.system.f0() == 0.0 && t.at_cap;
            (whole, t.z_bar)
        }
        None => (local.unbounded, local.radius),
    };
    let empty = !unbounded && !(radius > 0.0);
    let e = ellipsoid_region(&v0, if radius.is_finite() { radius } else { 0.0 })?;
    let q: Vec<Vec<f64>> = (0..e.q.nrows()).map(|i| (0..e.q.ncols()).map(|j| e.q[(i, j)]).collect()).collect();

    let meta = metadata(cfg, r, "region", num(r.delta));
    let mut b = Bundle::default();
    let mut table = Csv::new(&meta, &["z_hat", "zh_sup", "zf_sup", "value", "classification", "phi"]);
    for row in &local.table {
        let class = serde_json::to_value(row.classification).ok().and_then(|v| v.as_str().map(str::to_string));
        table.row(&[
            num(row.z_hat),
            num(row.zh_sup),
            num(row.zf_sup),
            num(row.value),
            class.unwrap_or_default(),
            num(row.phi),
        ]);
    }
    for &[i, j] in &cfg.region.axes {
        let name = format!("boundary_{i}_{j}.csv");
        if unbounded {
            // the whole plane: header only
            if i > q.len() || j > q.len() {
                return Err(CliError::Config(format!("axis pair ({i}, {j}) exceeds dimension {}", q.len())));
            }
            b.add(name, Csv::new(&meta, &[&format!("x_{i}"), &format!("x_{j}")]).into_string());
        } else {
            b.add(name, boundary_csv(&meta, &q, radius, [i, j], cfg.region.points)?);
        }
    }
    let summary = RegionSummary {
        mode,
        radius: (!unbounded).then_some(radius),
        unbounded,
        empty,
        q,
        axes: cfg.region.axes.clone(),
        local,
        threshold,
    };
    b.add("region.json", json(&meta, &summary));
    b.add("zhat_table.csv", table.into_string());
    b.add("stage.csv", stage_csv(&meta, stage));
    Ok(b)
}

/// Figure ids accepted by `reproduce`: every preset plus the stage plots
/// `fig2a`..`fig2d` (stage paths of fig1a, fig1b, fig1c and fig1f).
pub fn figure_ids() -> Vec<&'static str> {
    let mut ids: Vec<&'static str> = PRESET_NAMES.to_vec();
    ids.extend(["fig2a", "fig2b", "fig2c", "fig2d"]);
    ids.sort();
    ids
}

fn stage_figure(id: &str) -> Option<&'static str> {
    match id {
        "fig2a" => Some("fig1a"),
        "fig2b" => Some("fig1b"),
        "fig2c" => Some("fig1c"),
        "fig2d" => Some("fig1f"),
        _ => None,
    }
}

pub fn reproduce(figure: &str, base: &RunConfig) -> Result<Bundle> {
    let (name, stage_only) = match stage_figure(figure) {
        Some(p) => (p, true),
        None => (figure, false),
    };
    let p = preset(name).ok_or_else(|| {
        CliError::Config(format!("unknown figure {figure:?} (known: {})", figure_ids().join(", ")))
    })?;
    let cfg = RunConfig { system: Some(SystemSource::Preset(name.to_string())), ..base.clone() };
    let r = resolve(&cfg)?;
    let mut bundle = if stage_only {
        let an = analysis(&cfg, &r)?;
        let meta = metadata(&cfg, &r, "reproduce", num(r.delta));
        let mut b = Bundle::default();
        b.add("stage.csv", stage_csv(&meta, an.stage()));
        b
    } else {
        match p.task {
            PresetTask::Scan => scan(&cfg, &r)?,
            PresetTask::Bound => bound(&cfg, &r)?,
            PresetTask::StabilityRegion | PresetTask::TrappingRegion => region(&cfg, &r)?,
        }
    };
    let mut echo = serde_json::to_string_pretty(&RunConfig { out: None, ..cfg }).expect("config serializes");
    echo.push('\n');
    bundle.add("config.json", echo);
    Ok(bundle)
}
