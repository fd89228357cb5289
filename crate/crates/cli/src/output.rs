//! CSV/JSON writers. Files are staged in memory and only written once every
//! computation has succeeded, each one via a temp file and a rename.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};

/// Header data repeated in every output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub tool: String,
    pub command: String,
    pub config_sha256: String,
    pub system: String,
    pub kappa: Option<f64>,
    /// Window length, or the scanned range for `scan`.
    pub delta: String,
    pub rtol: f64,
    pub atol: f64,
    pub margin_tol: f64,
    pub horizon: f64,
    pub seed: Option<u64>,
    pub conventions: Vec<String>,
}

pub fn conventions() -> Vec<String> {
    vec![
        "centered moving-average windows".into(),
        "eigenvectors of unit 2-norm, phase fixed by the largest entry, continued along the grid".into(),
    ]
}

impl Metadata {
    fn comment_lines(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or("none".to_string(), num);
        writeln!(s, "# {} {}", self.tool, self.command).unwrap();
        writeln!(s, "# config_sha256 = {}", self.config_sha256).unwrap();
        writeln!(s, "# system = {}", self.system).unwrap();
        writeln!(s, "# kappa = {}", opt(self.kappa)).unwrap();
        writeln!(s, "# delta = {}", self.delta).unwrap();
        writeln!(s, "# rtol = {}", num(self.rtol)).unwrap();
        writeln!(s, "# atol = {}", num(self.atol)).unwrap();
        writeln!(s, "# margin_tol = {}", num(self.margin_tol)).unwrap();
        writeln!(s, "# horizon = {}", num(self.horizon)).unwrap();
        writeln!(s, "# seed = {}", self.seed.map_or("none".to_string(), |v| v.to_string())).unwrap();
        for c in &self.conventions {
            writeln!(s, "# convention: {c}").unwrap();
        }
        s
    }
}

/// 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(meta: &Metadata, header: &[&str]) -> Self {
        let mut text = meta.comment_lines();
        text.push_str(&header.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn nums(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|v| num(*v)).collect();
        self.row(&cells);
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

#[derive(Serialize)]
struct WithMeta<'a, T: Serialize> {
    metadata: &'a Metadata,
    #[serde(flatten)]
    body: &'a T,
}

pub fn json<T: Serialize>(meta: &Metadata, body: &T) -> String {
    let mut s = serde_json::to_string_pretty(&WithMeta { metadata: meta, body }).expect("report serializes");
    s.push('\n');
    s
}

/// Named file contents waiting to be written.
#[derive(Debug, Default)]
pub struct Bundle {
    pub files: Vec<(String, String)>,
}

impl Bundle {
    pub fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        let mut written = Vec::new();
        for (name, contents) in &self.files {
            let path = dir.join(name);
            write_atomic(&path, contents)?;
            written.push(path);
        }
        Ok(written)
    }
}

pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let io = |source| CliError::Io { path: path.to_path_buf(), source };
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(|source| {
        let _ = fs::remove_file(&tmp);
        CliError::Io { path: path.to_path_buf(), source }
    })
}
