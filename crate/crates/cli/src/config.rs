//! Run configuration document.
//!
//! Every section is optional and defaults to the COMET device values; see
//! `comet defaults` for the full document. Relative paths are resolved
//! against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use comet_core::baseline::CrossbarConfig;
use comet_core::engine::{SimOptions, TimingParams, WriteData};
use comet_core::pcm_cell::ResetMode;
use comet_core::trace_synth::TraceSpec;
use comet_core::{GeometrySpec, LossParams, PowerParams};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    #[default]
    Comet,
    Cosmos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellConfig {
    pub reset_mode: ResetMode,
    /// JSON level-override document.
    pub level_overrides: Option<PathBuf>,
    pub guard_band: Option<f64>,
    pub write_data: WriteData,
}

impl Default for CellConfig {
    fn default() -> Self {
        Self {
            reset_mode: ResetMode::Crystalline,
            level_overrides: None,
            guard_band: None,
            write_data: WriteData::Uniform,
        }
    }
}

/// Gain LUT options. Unset fields follow from the loss parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LutConfig {
    pub soa_interval_rows: Option<u32>,
    pub per_row_loss_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceSource {
    File(PathBuf),
    Synthetic(TraceSpec),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub architecture: Architecture,
    pub geometry: GeometrySpec,
    pub timing: TimingParams,
    pub loss: LossParams,
    pub power: PowerParams,
    pub cell: CellConfig,
    pub lut: LutConfig,
    /// Waveguide length across the die on the worst-case path.
    pub die_length_cm: f64,
    pub cosmos: CrossbarConfig,
    pub trace: Option<TraceSource>,
    pub options: SimOptions,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            architecture: Architecture::Comet,
            geometry: GeometrySpec::comet_4b(),
            timing: TimingParams::default(),
            loss: LossParams::default(),
            power: PowerParams::default(),
            cell: CellConfig::default(),
            lut: LutConfig::default(),
            die_length_cm: 2.0,
            cosmos: CrossbarConfig::default(),
            trace: None,
            options: SimOptions::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses a config document, naming the offending field on failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("config field `{path}`: {}", e.into_inner())
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            bail!(
                "config field `schema_version`: unsupported version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            );
        }
        Ok(cfg)
    }

    /// Loads `path` and resolves its relative file references.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_file(path, "config file")?;
        let mut cfg = Self::from_json(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.cell.level_overrides.as_mut() {
            fix(p);
        }
        if let Some(TraceSource::File(p)) = self.trace.as_mut() {
            fix(p);
        }
        if let Some(p) = self.output.json.as_mut() {
            fix(p);
        }
        if let Some(p) = self.output.csv.as_mut() {
            fix(p);
        }
    }
}

/// Reads a text file, reporting a missing file by name.
pub fn read_file(path: &Path, what: &str) -> Result<String> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            bail!("{what} not found: {}", path.display())
        }
        Err(e) => Err(e).with_context(|| format!("reading {what} {}", path.display())),
    }
}
