//! Flat `key = value` settings: a TOML file, then `I2GFP_*` environment
//! variables, then `--set key=value` overrides.
//!
//! Keys are dotted (`train.lr_initial`). An environment variable maps to a
//! key by dropping the `I2GFP_` prefix, lowercasing, and turning `__` into
//! `.`: `I2GFP_TRAIN__LR_INITIAL` sets `train.lr_initial`. Relative paths
//! from the file resolve against the file's directory; relative paths from
//! overrides resolve against the working directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

pub const ENV_PREFIX: &str = "I2GFP_";

#[derive(Debug, thiserror::Error)]
pub enum SettingsError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config file {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("override {0:?} is not of the form key=value")]
    Override(String),
    #[error("key {key}: {message}")]
    Value { key: String, message: String },
    #[error("unknown configuration keys: {0}")]
    Unknown(String),
}

#[derive(Debug, Clone)]
struct Entry {
    value: toml::Value,
    base: PathBuf,
    source: &'static str,
}

#[derive(Debug)]
pub struct Settings {
    entries: BTreeMap<String, Entry>,
    used: std::cell::RefCell<BTreeSet<String>>,
}

fn flatten(prefix: &str, table: &toml::Table, base: &Path, out: &mut BTreeMap<String, Entry>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, base, out),
            other => {
                out.insert(
                    key,
                    Entry {
                        value: other.clone(),
                        base: base.to_path_buf(),
                        source: "file",
                    },
                );
            }
        }
    }
}

/// Parses an override value as a TOML scalar or array; anything else is
/// taken as a bare string.
fn parse_scalar(text: &str) -> toml::Value {
    let doc = format!("v = {text}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(text.into())),
        Err(_) => toml::Value::String(text.into()),
    }
}

impl Settings {
    pub fn load(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        overrides: &[String],
    ) -> Result<Self, SettingsError> {
        let mut entries = BTreeMap::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|source| SettingsError::Read {
                path: path.to_path_buf(),
                source,
            })?;
            let table: toml::Table = text.parse().map_err(|e: toml::de::Error| SettingsError::Parse {
                path: path.to_path_buf(),
                message: e.message().to_string(),
            })?;
            let base = path
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default();
            flatten("", &table, &base, &mut entries);
        }
        let cwd = PathBuf::new();
        let mut env: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k.len() > ENV_PREFIX.len())
            .collect();
        env.sort();
        for (k, v) in env {
            let key = k[ENV_PREFIX.len()..].to_lowercase().replace("__", ".");
            entries.insert(
                key,
                Entry {
                    value: parse_scalar(&v),
                    base: cwd.clone(),
                    source: "env",
                },
            );
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| SettingsError::Override(o.clone()))?;
            entries.insert(
                k.trim().to_string(),
                Entry {
                    value: parse_scalar(v.trim()),
                    base: cwd.clone(),
                    source: "override",
                },
            );
        }
        Ok(Settings {
            entries,
            used: Default::default(),
        })
    }

    /// Sets a key over any earlier source; relative paths resolve against
    /// the working directory.
    pub fn insert(&mut self, key: &str, value: toml::Value, source: &'static str) {
        self.entries.insert(
            key.to_string(),
            Entry {
                value,
                base: PathBuf::new(),
                source,
            },
        );
    }

    fn get(&self, key: &str) -> Option<&Entry> {
        self.used.borrow_mut().insert(key.to_string());
        self.entries.get(key)
    }

    fn bad(key: &str, message: impl Into<String>) -> SettingsError {
        SettingsError::Value {
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub fn string(&self, key: &str) -> Result<Option<String>, SettingsError> {
        match self.get(key).map(|e| &e.value) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Ok(Some(other.to_string())),
        }
    }

    pub fn path(&self, key: &str) -> Result<Option<PathBuf>, SettingsError> {
        let Some(e) = self.get(key) else {
            return Ok(None);
        };
        let toml::Value::String(s) = &e.value else {
            return Err(Self::bad(key, "expected a path string"));
        };
        let p = PathBuf::from(s);
        Ok(Some(if p.is_absolute() { p } else { e.base.join(p) }))
    }

    pub fn required_path(&self, key: &str) -> Result<PathBuf, SettingsError> {
        self.path(key)?
            .ok_or_else(|| Self::bad(key, "is required"))
    }

    pub fn float(&self, key: &str) -> Result<Option<f64>, SettingsError> {
        match self.get(key).map(|e| &e.value) {
            None => Ok(None),
            Some(toml::Value::Float(f)) => Ok(Some(*f)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(other) => Err(Self::bad(key, format!("expected a number, got {other}"))),
        }
    }

    pub fn uint(&self, key: &str) -> Result<Option<u64>, SettingsError> {
        match self.get(key).map(|e| &e.value) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(other) => Err(Self::bad(
                key,
                format!("expected a non-negative integer, got {other}"),
            )),
        }
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>, SettingsError> {
        Ok(self.uint(key)?.map(|v| v as usize))
    }

    pub fn boolean(&self, key: &str) -> Result<Option<bool>, SettingsError> {
        match self.get(key).map(|e| &e.value) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(*b)),
            Some(other) => Err(Self::bad(key, format!("expected true or false, got {other}"))),
        }
    }

    pub fn usize_list(&self, key: &str) -> Result<Option<Vec<usize>>, SettingsError> {
        match self.get(key).map(|e| &e.value) {
            None => Ok(None),
            Some(toml::Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                    other => Err(Self::bad(key, format!("expected integers, got {other}"))),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(vec![*i as usize])),
            Some(other) => Err(Self::bad(key, format!("expected a list of integers, got {other}"))),
        }
    }

    /// Fails on keys that no getter asked for, except those in `tolerated`
    /// (keys that belong to other commands sharing the same file).
    pub fn reject_unused(&self, tolerated: &[&str]) -> Result<(), SettingsError> {
        let used = self.used.borrow();
        let unknown: Vec<String> = self
            .entries
            .iter()
            .filter(|(k, _)| !used.contains(*k) && !tolerated.contains(&k.as_str()))
            .map(|(k, e)| format!("{k} (from {})", e.source))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(SettingsError::Unknown(unknown.join(", ")))
        }
    }

    /// Raw key/value view with the source of every entry.
    pub fn describe(&self) -> Value {
        let mut m = Map::new();
        for (k, e) in &self.entries {
            m.insert(k.clone(), json!({"value": e.value.to_string(), "source": e.source}));
        }
        Value::Object(m)
    }
}
