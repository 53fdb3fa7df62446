//! Scenario files: TOML in, validated [`ScenarioConfig`] out.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;
use wdmoe_core::sim::ConfigError;
use wdmoe_core::ScenarioConfig;

/// The bundled scenario: 8 devices, 100 MHz split evenly, 3.5 GHz carrier,
/// 10 W base station and 0.2 W devices.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(#[from] ConfigError),
}

/// Parses and validates a scenario. Missing keys take their defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, LoadError> {
    let config: ScenarioConfig = toml::from_str(text)?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.display().to_string(), source })?;
    parse_config(&text)
}

/// The fully materialized config as TOML.
pub fn effective_config_toml(config: &ScenarioConfig) -> String {
    toml::to_string_pretty(config).expect("scenario config always serializes to TOML")
}

/// SHA-256 over the canonical JSON form, so key order, comments and
/// omitted defaults in the source file do not change it.
pub fn config_digest(config: &ScenarioConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("scenario config always serializes to JSON");
    hex::encode(Sha256::digest(&canonical))
}
