use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use linspg::instances::GeneratorSpec;
use serde::Deserialize;

pub const OUT_ENV: &str = "LINSPG_OUT";
pub const DEFAULT_OUT: &str = "linspg-out";

/// JSON config file. Every field is optional; command-line flags win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    /// When present, must name the subcommand being invoked.
    pub subcommand: Option<String>,
    pub registry: Option<String>,
    pub file: Option<PathBuf>,
    pub generator: Option<GeneratorSpec>,
    pub out: Option<PathBuf>,
    pub theta: Option<Vec<f64>>,
    pub lr: Option<String>,
    pub lrs: Option<Vec<String>>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub stride: Option<f64>,
    pub noise: Option<String>,
    pub noises: Option<Vec<String>>,
    pub runs: Option<f64>,
    pub seeds: Option<f64>,
    pub master_seed: Option<u64>,
    pub ledger: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn check_subcommand(&self, invoked: &str) -> Result<()> {
        match &self.subcommand {
            Some(s) if s != invoked => bail!("config file is for `{s}`, not `{invoked}`"),
            _ => Ok(()),
        }
    }
}

/// Flag, then config file, then environment, then the built-in default.
pub fn output_dir(flag: Option<PathBuf>, config: &FileConfig) -> Result<PathBuf> {
    let dir = flag
        .or_else(|| config.out.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let probe = dir.join(".linspg-write-probe");
    std::fs::write(&probe, b"").with_context(|| format!("output directory {} is not writable", dir.display()))?;
    let _ = std::fs::remove_file(probe);
    Ok(dir)
}

/// Accepts integers written as `100000`, `1e5` or `1_000`.
pub fn parse_count(s: &str) -> std::result::Result<usize, String> {
    let cleaned = s.trim().replace('_', "");
    if let Ok(n) = cleaned.parse::<usize>() {
        return Ok(n);
    }
    let x: f64 = cleaned.parse().map_err(|_| format!("`{s}` is not a count"))?;
    count_from_f64(x).ok_or_else(|| format!("`{s}` is not a non-negative integer"))
}

pub fn count_from_f64(x: f64) -> Option<usize> {
    (x.is_finite() && x >= 0.0 && x.fract() == 0.0 && x <= usize::MAX as f64).then_some(x as usize)
}

pub fn config_count(x: Option<f64>, field: &str) -> Result<Option<usize>> {
    x.map(|v| count_from_f64(v).with_context(|| format!("config field `{field}` must be a non-negative integer")))
        .transpose()
}
