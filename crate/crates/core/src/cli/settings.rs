use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::engine::TrainConfig;
use crate::error::{Error, Result};

/// A [`TrainConfig`] under construction, edited key by key.
///
/// Keys are the serialized field names of the config (adapter toggles
/// appear flattened, e.g. `enable_lft`). Each value is parsed according to
/// the type of the field it replaces.
#[derive(Debug, Clone)]
pub struct Settings {
    fields: Map<String, Value>,
}

impl Settings {
    pub fn new(base: &TrainConfig) -> Self {
        match serde_json::to_value(base) {
            Ok(Value::Object(fields)) => Self { fields },
            _ => unreachable!("TrainConfig serializes to an object"),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.fields.keys().map(String::as_str)
    }

    /// Replaces one field. Errors name the key and what was expected.
    pub fn set(&mut self, key: &str, raw: &str) -> std::result::Result<(), String> {
        let Some(slot) = self.fields.get_mut(key) else {
            return Err(format!("unknown key `{key}`"));
        };
        let raw = raw.trim();
        let value = match slot {
            Value::Bool(_) => raw
                .parse::<bool>()
                .map(Value::Bool)
                .map_err(|_| format!("`{key}` expects true or false, got `{raw}`"))?,
            Value::Number(n) if n.is_u64() => raw
                .parse::<u64>()
                .map(Value::from)
                .map_err(|_| format!("`{key}` expects a non-negative integer, got `{raw}`"))?,
            Value::Number(_) => raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Value::from)
                .ok_or_else(|| format!("`{key}` expects a number, got `{raw}`"))?,
            _ => Value::String(raw.trim_matches('"').to_string()),
        };
        *slot = value;
        Ok(())
    }

    /// Parses a `key=value` assignment.
    pub fn assign(&mut self, assignment: &str) -> std::result::Result<(), String> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| format!("expected KEY=VALUE, got `{assignment}`"))?;
        self.set(k.trim(), v)
    }

    /// Applies a config file: `key = value` lines, `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.assign(line).map_err(|msg| Error::Parse {
                path: PathBuf::from(origin),
                line: i + 1,
                msg,
            })?;
        }
        Ok(())
    }

    pub fn build(&self) -> Result<TrainConfig> {
        let cfg: TrainConfig =
            serde_json::from_value(Value::Object(self.fields.clone())).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
