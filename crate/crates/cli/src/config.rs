//! Experiment files.
//!
//! The primary format is TOML. A `manifest.json` written by `run` is accepted
//! as well; its `config` member is the fully resolved configuration of that run.

use std::path::Path;

use postprice::oracle::geometric_checkpoints;
use postprice::runner::ExperimentConfig;
use serde::Deserialize;

use crate::{CliError, Result};

#[derive(Deserialize)]
struct ManifestConfig {
    config: ExperimentConfig,
}

/// Reads and parses an experiment file; diagnostics carry the file name and,
/// for TOML, the line and offending field.
pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        parse_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        parse_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn parse_toml(text: &str) -> std::result::Result<ExperimentConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

pub fn parse_json(text: &str) -> std::result::Result<ExperimentConfig, String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if value.get("config").is_some() {
        serde_json::from_value::<ManifestConfig>(value)
            .map(|m| m.config)
            .map_err(|e| format!("manifest config: {e}"))
    } else {
        serde_json::from_value(value).map_err(|e| e.to_string())
    }
}

/// `--checkpoints` values: `geometric`, `every:N`, or a comma-separated list.
pub fn parse_checkpoints(spec: &str, horizon: u64) -> Result<Vec<u64>> {
    let spec = spec.trim();
    if spec == "geometric" {
        return Ok(geometric_checkpoints(horizon));
    }
    if let Some(step) = spec.strip_prefix("every:") {
        let step: u64 = step
            .parse()
            .ok()
            .filter(|s| *s > 0)
            .ok_or_else(|| CliError::Config(format!("--checkpoints: bad step in `{spec}`")))?;
        let mut out: Vec<u64> = (1..).map(|i| i * step).take_while(|t| *t <= horizon).collect();
        if out.last() != Some(&horizon) {
            out.push(horizon);
        }
        return Ok(out);
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| CliError::Config(format!("--checkpoints: `{s}` is not a round number")))
        })
        .collect()
}
