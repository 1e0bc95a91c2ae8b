//! JSON experiment configs: parsing with key-path diagnostics, plus the raw
//! text for echoing into reports.

use std::path::{Path, PathBuf};

use dflmtd_core::config::ExperimentConfig;
use serde_json::value::RawValue;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config `{key}`: {message}")]
    Schema { key: String, message: String },
    #[error(transparent)]
    Invalid(#[from] dflmtd_core::Error),
}

impl ConfigError {
    /// Dotted path of the offending key, when the error has one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Schema { key, .. } => Some(key),
            ConfigError::Invalid(dflmtd_core::Error::Config { key, .. }) => Some(key),
            _ => None,
        }
    }
}

/// A parsed config together with the exact JSON it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub raw: Box<RawValue>,
}

pub fn parse_config_str(text: &str) -> Result<LoadedConfig, ConfigError> {
    let raw: Box<RawValue> = serde_json::from_str(text).map_err(|e| ConfigError::Schema {
        key: ".".into(),
        message: e.to_string(),
    })?;
    let de = &mut serde_json::Deserializer::from_str(raw.get());
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        // unknown keys are part of the path already
        ConfigError::Schema {
            key: e.path().to_string(),
            message: e.inner().to_string(),
        }
    })?;
    config.validate()?;
    Ok(LoadedConfig { config, raw })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

/// Pretty JSON of a config, with every default spelled out.
pub fn to_json(cfg: &ExperimentConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config serializes")
}
