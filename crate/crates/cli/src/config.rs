//! Run configuration: one JSON document, `schemaVersion: 1`, unknown keys rejected.

use std::path::{Path, PathBuf};

use auxbound::aux_ode::Variant;
use auxbound::dichotomy::Objective;
use auxbound::systems::{benchmark, preset, BenchmarkParams, Oscillator, PresetTask, SystemSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Where the system comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub enum SystemSource {
    Preset(String),
    Benchmark(BenchmarkSource),
    Inline(SystemSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSource {
    pub oscillator: Oscillator,
    #[serde(default)]
    pub params: BenchmarkParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Allowed negative margin when checking a bound.
    pub margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-12, margin: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct ScanSection {
    pub start: f64,
    pub end: f64,
    pub step: f64,
    pub objective: Objective,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self { start: 0.0, end: 20.0, step: 0.5, objective: Objective::Phi2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct BoundSection {
    /// Explicit initial vector. Without it the direction is drawn from `seed`
    /// (or the documented benchmark direction) and scaled to `x0Norm`.
    pub x0: Option<Vec<f64>>,
    pub x0_norm: f64,
    pub variants: Vec<Variant>,
    pub output_step: f64,
}

impl Default for BoundSection {
    fn default() -> Self {
        Self { x0: None, x0_norm: 0.1, variants: vec![Variant::Hat33], output_step: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionMode {
    /// Picked from the preset task, or from the forcing for other systems.
    Auto,
    LocalStability,
    LocalBounded,
    NonlocalStability,
    NonlocalTrapping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct RegionSection {
    pub mode: RegionMode,
    /// One-based coordinate pairs.
    pub axes: Vec<[usize; 2]>,
    pub points: usize,
    pub z_cap: f64,
    pub rel_tol: f64,
}

impl Default for RegionSection {
    fn default() -> Self {
        Self { mode: RegionMode::Auto, axes: vec![[1, 2]], points: 256, z_cap: 1e3, rel_tol: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub system: Option<SystemSource>,
    /// Window length; defaults to the preset's window, else 6.
    pub delta: Option<f64>,
    pub horizon: f64,
    pub grid_step: f64,
    pub quad_step: f64,
    pub depth: usize,
    /// Replaces the forcing amplitude `F0` (the profile is rescaled).
    pub f0: Option<f64>,
    pub tolerances: Tolerances,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub scan: ScanSection,
    pub bound: BoundSection,
    pub region: RegionSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            system: None,
            delta: None,
            horizon: 100.0,
            grid_step: 0.01,
            quad_step: 0.01,
            depth: 1,
            f0: None,
            tolerances: Tolerances::default(),
            seed: None,
            out: None,
            scan: ScanSection::default(),
            bound: BoundSection::default(),
            region: RegionSection::default(),
        }
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Config(msg.into()))
}

fn positive(v: f64, what: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        config_err(format!("{what} must be positive and finite"))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        // a missing version must not fall back to the current one
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if raw.get("schemaVersion").is_none() {
            return config_err("schemaVersion is required");
        }
        let cfg: RunConfig = serde_json::from_value(raw).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return config_err(format!("unsupported schemaVersion {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        positive(self.horizon, "horizon")?;
        positive(self.grid_step, "gridStep")?;
        positive(self.quad_step, "quadStep")?;
        positive(self.tolerances.rtol, "tolerances.rtol")?;
        positive(self.tolerances.atol, "tolerances.atol")?;
        positive(self.tolerances.margin, "tolerances.margin")?;
        positive(self.bound.output_step, "bound.outputStep")?;
        positive(self.region.z_cap, "region.zCap")?;
        positive(self.scan.step, "scan.step")?;
        if self.depth == 0 {
            return config_err("depth must be at least 1");
        }
        if let Some(d) = self.delta {
            if !(d >= 0.0 && d.is_finite()) {
                return config_err("delta must be finite and nonnegative");
            }
        }
        if let Some(f) = self.f0 {
            if !(f >= 0.0 && f.is_finite()) {
                return config_err("f0 must be finite and nonnegative");
            }
        }
        if !(self.bound.x0_norm >= 0.0 && self.bound.x0_norm.is_finite()) {
            return config_err("bound.x0Norm must be finite and nonnegative");
        }
        if self.bound.variants.is_empty() || self.bound.variants.contains(&Variant::Hom34) {
            return config_err("bound.variants must list hat33 and/or full32");
        }
        if !(self.region.rel_tol > 0.0 && self.region.rel_tol < 0.5) {
            return config_err("region.relTol must lie in (0, 0.5)");
        }
        if self.region.points < 3 {
            return config_err("region.points must be at least 3");
        }
        if self.region.axes.iter().any(|[i, j]| *i == 0 || *j == 0 || i == j) {
            return config_err("region.axes are pairs of distinct one-based coordinates");
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization of the effective configuration.
    /// The output directory is left out: it does not change any result.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&RunConfig { out: None, ..self.clone() }).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// The system after preset lookup and forcing override.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub system: SystemSpec,
    pub label: String,
    pub task: Option<PresetTask>,
    pub delta: f64,
}

impl Resolved {
    pub fn kappa(&self) -> Option<f64> {
        self.system.benchmark.map(|(_, p)| p.kappa)
    }
}

pub fn resolve(cfg: &RunConfig) -> Result<Resolved> {
    let source = cfg.system.as_ref().ok_or_else(|| CliError::Config("no system given (set system or --preset)".into()))?;
    let (mut system, label, task, preset_delta) = match source {
        SystemSource::Preset(name) => {
            let p = preset(name).ok_or_else(|| CliError::Config(format!("unknown preset {name:?}")))?;
            (p.system()?, name.clone(), Some(p.task), Some(p.delta))
        }
        SystemSource::Benchmark(b) => (benchmark(b.oscillator, &b.params)?, "benchmark".to_string(), None, None),
        SystemSource::Inline(s) => {
            s.validate()?;
            (s.clone(), "inline".to_string(), None, None)
        }
    };
    if let Some(f0) = cfg.f0 {
        system = with_forcing_amplitude(system, f0)?;
    }
    let delta = cfg.delta.or(preset_delta).unwrap_or(6.0);
    Ok(Resolved { system, label, task, delta })
}

fn with_forcing_amplitude(mut system: SystemSpec, f0: f64) -> Result<SystemSpec> {
    let current = system.f0();
    if f0 == 0.0 {
        system.forcing.terms.clear();
        if let Some((_, p)) = system.benchmark.as_mut() {
            p.f1 = 0.0;
            p.f2 = 0.0;
        }
        return Ok(system);
    }
    if current == 0.0 {
        return config_err("f0 override needs a forcing profile to rescale");
    }
    let s = f0 / current;
    for t in &mut system.forcing.terms {
        t.amplitude *= s;
    }
    if let Some((_, p)) = system.benchmark.as_mut() {
        p.f1 *= s;
        p.f2 *= s;
    }
    Ok(system)
}
