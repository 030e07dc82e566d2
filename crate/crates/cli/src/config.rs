//! Effective run settings: command-line flags override the `--config` file,
//! which overrides built-in defaults. Every value that was read is recorded so
//! the output can echo it and hash it.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub struct Settings {
    file: Map<String, Value>,
    used: BTreeMap<String, Value>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let file = match path {
            None => Map::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
                match serde_json::from_str(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(CliError::Usage("config file must hold a JSON object".into())),
                    Err(e) => return Err(CliError::Usage(format!("config file: {e}"))),
                }
            }
        };
        Ok(Settings { file, used: BTreeMap::new() })
    }

    /// Flag value, else config value under `key`, else `default`.
    pub fn get<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError> {
        let v = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(raw) => serde_json::from_value(raw.clone())
                    .map_err(|e| CliError::Usage(format!("config key {key:?}: {e}")))?,
                None => default,
            },
        };
        self.record(key, &v);
        Ok(v)
    }

    /// Like [`Settings::get`] without a default.
    pub fn get_opt<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        let v = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(raw) => Some(
                    serde_json::from_value(raw.clone())
                        .map_err(|e| CliError::Usage(format!("config key {key:?}: {e}")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    pub fn record<T: Serialize>(&mut self, key: &str, v: &T) {
        self.used.insert(key.to_string(), serde_json::to_value(v).expect("serializable setting"));
    }

    /// Rejects config keys that no part of the command read.
    pub fn check_unused(&self) -> Result<(), CliError> {
        let extra: Vec<&String> = self.file.keys().filter(|k| !self.used.contains_key(*k)).collect();
        if extra.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!("config keys not used by this command: {extra:?}")))
        }
    }

    pub fn inputs(&self) -> &BTreeMap<String, Value> {
        &self.used
    }

    /// SHA-256 of the sorted inputs as compact JSON.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.used).expect("serializable settings");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
