use std::path::{Path, PathBuf};

use ni_consensus::checks::CheckSettings;
use ni_consensus::linsys::StateSpaceLiteral;
use ni_consensus::{Graph, IntegratorConfig, Mode};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    /// Required in network mode, ignored in pair mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<Graph>,
    /// Single-key plant literal, e.g. `{"pendulum": {...}}`.
    pub plant: Value,
    pub controller: StateSpaceLiteral,
    pub delta: f64,
    pub initial: InitialConditions,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Checks run after `simulate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<String>>,
    /// Checks run by `verify`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<Vec<String>>,
    #[serde(default)]
    pub check_settings: CheckSettings,
    #[serde(default)]
    pub frequency_grid: GridConfig,
}

fn default_mode() -> Mode {
    Mode::Network
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditions {
    /// One state vector per node (a single entry in pair mode).
    pub plant: Vec<Vec<f64>>,
    /// Defaults to zero controller states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { lo: 1e-3, hi: 1e4, points: 400 }
    }
}

/// Parses config text, naming the offending field and position on failure.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        CliError::Config(format!(
            "at `{}` (line {}, column {}): {}",
            e.path(),
            inner.line(),
            inner.column(),
            strip_position(&inner.to_string())
        ))
    })?;
    validate(&cfg)?;
    Ok(cfg)
}

fn strip_position(msg: &str) -> &str {
    msg.rsplit_once(" at line ").map_or(msg, |(head, _)| head)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn field_error(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("at `{field}`: {msg}"))
}

/// Semantic checks serde cannot express.
pub fn validate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if cfg.schema != SCHEMA_VERSION {
        return Err(field_error("schema", format!("unsupported version {}, expected {SCHEMA_VERSION}", cfg.schema)));
    }
    if !(cfg.delta.is_finite() && cfg.delta > 0.0) {
        return Err(field_error("delta", format!("must be positive, got {}", cfg.delta)));
    }
    let ig = &cfg.integrator;
    if !(ig.step_s.is_finite() && ig.step_s > 0.0) {
        return Err(field_error("integrator.step_s", format!("must be positive, got {}", ig.step_s)));
    }
    ig.steps().map_err(|e| field_error("integrator", e))?;
    if cfg.mode == Mode::Network && cfg.graph.is_none() {
        return Err(field_error("graph", "network mode needs a graph"));
    }
    let g = &cfg.frequency_grid;
    ni_consensus::FreqGrid::log_spaced(g.lo, g.hi, g.points).map_err(|e| field_error("frequency_grid", e))?;
    Ok(())
}
