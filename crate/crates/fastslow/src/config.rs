//! TOML configuration files.

use std::fs;
use std::path::Path;

use fastslow_core::trainer::TrainConfig;
use fastslow_core::{ScenarioConfig, ScenarioKind};

use crate::{Error, Result};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let config: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(config)
}

/// A scenario from a TOML file, or a preset when `name_or_path` names one
/// (`highway`, `merge`, `two_way`) and no such file exists.
pub fn resolve_scenario(name_or_path: &str) -> Result<ScenarioConfig> {
    let path = Path::new(name_or_path);
    if path.exists() {
        return parse_scenario(&read(path)?);
    }
    match ScenarioKind::from_name(name_or_path) {
        Some(kind) => Ok(ScenarioConfig::preset(kind, 0)),
        None => Err(Error::Config(format!("scenario file not found: {name_or_path}"))),
    }
}

pub fn parse_train_config(text: &str) -> Result<TrainConfig> {
    let config: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(config)
}

pub fn load_train_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => parse_train_config(&read(p)?),
        None => Ok(TrainConfig::default()),
    }
}

pub fn scenario_toml(config: &ScenarioConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::Config(e.to_string()))
}
