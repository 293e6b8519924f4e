//! Layered configuration: built-in defaults, then the TOML config file,
//! then command-line flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    root: Map<String, Value>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        let value: Value = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.message())))?;
        match value {
            Value::Object(root) => Ok(FileConfig { root }),
            _ => Err(CliError::Usage(format!("{}: expected a table", path.display()))),
        }
    }

    pub fn section(&self, name: &str) -> Map<String, Value> {
        match self.root.get(name) {
            Some(Value::Object(m)) => m.clone(),
            _ => Map::new(),
        }
    }

    pub fn seed(&self) -> Result<Option<u64>, CliError> {
        self.scalar("seed")
    }

    pub fn jobs(&self) -> Result<Option<usize>, CliError> {
        self.scalar("jobs")
    }

    fn scalar<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.root
            .get(key)
            .map(|v| serde_json::from_value(v.clone()).map_err(|e| CliError::Usage(format!("config key {key}: {e}"))))
            .transpose()
    }
}

/// Apply `layers` on top of `base`, rejecting keys `base` does not have.
pub fn resolve<T: Serialize + DeserializeOwned>(
    base: &T,
    section: &str,
    layers: &[Map<String, Value>],
) -> Result<T, CliError> {
    let mut merged = match serde_json::to_value(base).map_err(qfsum_core::Error::from)? {
        Value::Object(m) => m,
        _ => unreachable!("configs serialize to objects"),
    };
    for layer in layers {
        for (key, value) in layer {
            if !merged.contains_key(key) {
                return Err(CliError::Usage(format!("unknown {section} option {key:?}")));
            }
            merged.insert(key.clone(), value.clone());
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Usage(format!("invalid {section} options: {e}")))
}

/// Collect the flags that were actually given.
#[derive(Default)]
pub struct Overrides(Map<String, Value>);

impl Overrides {
    pub fn set<T: Serialize>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.0
                .insert(key.to_string(), serde_json::to_value(v).expect("flag value serializes"));
        }
        self
    }

    pub fn into_map(self) -> Map<String, Value> {
        self.0
    }
}
