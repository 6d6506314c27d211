//! Run configuration: a JSON file with global keys and one section per
//! subcommand. Flags win over the file, the file over preset defaults.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Malformed or inconsistent configuration; exits with code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub budget: Option<u64>,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
    pub normalized: Option<bool>,
    pub scan: Option<Value>,
    pub sums: Option<Value>,
    pub transform: Option<Value>,
    pub correspond: Option<Value>,
    pub certify: Option<Value>,
    pub minima: Option<Value>,
    pub cantor: Option<Value>,
    pub diag_blocks: Option<Value>,
    pub param_check: Option<Value>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
    }

    pub fn section(&self, command: &str) -> Option<&Value> {
        match command {
            "scan" => self.scan.as_ref(),
            "sums" => self.sums.as_ref(),
            "transform" => self.transform.as_ref(),
            "correspond" => self.correspond.as_ref(),
            "certify" => self.certify.as_ref(),
            "minima" => self.minima.as_ref(),
            "cantor" => self.cantor.as_ref(),
            "diag-blocks" => self.diag_blocks.as_ref(),
            "param-check" => self.param_check.as_ref(),
            _ => None,
        }
    }
}

/// Overlays the flags that were given onto the config section. Every field
/// of `T` is optional, so the keys of `T::default()` are the accepted keys.
pub fn merge<T>(flags: &T, section: Option<&Value>) -> anyhow::Result<T>
where
    T: Serialize + DeserializeOwned + Default,
{
    let Value::Object(known) = serde_json::to_value(T::default())? else {
        unreachable!("argument records serialize to objects");
    };
    let mut merged = match section {
        None => Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(_) => return Err(config_error("command section must be a JSON object")),
    };
    if let Some(bad) = merged.keys().find(|k| !known.contains_key(*k)) {
        return Err(config_error(format!("unknown config key `{bad}`")));
    }
    if let Value::Object(given) = serde_json::to_value(flags)? {
        merged.extend(given.into_iter().filter(|(_, v)| !v.is_null()));
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| config_error(e.to_string()))
}
