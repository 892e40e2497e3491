//! Flat key-value config files, flag/file merging, and run provenance.
//!
//! Config files mirror the long flag names: one `key = value` per line,
//! `#` comments. Values given on the command line win over the file.
//! Every run's resolved configuration is echoed into its outputs along
//! with a hash of it, so byte-identical outputs certify identical runs.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

pub type ConfigMap = BTreeMap<String, String>;

#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self { message: message.into(), exit_code: 2 }
    }

    pub fn from_core(err: treecp_core::Error) -> Self {
        let exit_code = match err {
            treecp_core::Error::PrecisionBudget(_) | treecp_core::Error::GridTooLong(_) => 3,
            _ => 2,
        };
        Self { message: err.to_string(), exit_code }
    }
}

pub fn load_config(path: &Path) -> Result<ConfigMap, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = ConfigMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::validation(format!(
                "config {}:{}: expected key = value",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Resolved parameters of a run, in insertion order, echoed into outputs.
#[derive(Debug, Default, Clone)]
pub struct Resolved {
    entries: Vec<(String, String)>,
}

impl Resolved {
    pub fn push(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// FNV-1a over the canonical `key=value` list.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (k, v) in &self.entries {
            for b in k.bytes().chain([b'='].into_iter()).chain(v.bytes()).chain([b'\n']) {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }

    pub fn json_object(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (k, v) in &self.entries {
            map.insert(k.clone(), serde_json::Value::String(v.clone()));
        }
        serde_json::Value::Object(map)
    }
}

/// Flag value if present, else the config-file value, else `None`.
pub fn merge<T>(flag: Option<T>, cfg: &ConfigMap, key: &str) -> Result<Option<T>, CliError>
where
    T: FromStr,
    T::Err: Display,
{
    if flag.is_some() {
        return Ok(flag);
    }
    match cfg.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|e| CliError::validation(format!("config key {key}: {e}"))),
    }
}

/// Like [`merge`] but falls back to a default.
pub fn merge_or<T>(flag: Option<T>, cfg: &ConfigMap, key: &str, default: T) -> Result<T, CliError>
where
    T: FromStr,
    T::Err: Display,
{
    Ok(merge(flag, cfg, key)?.unwrap_or(default))
}

/// Like [`merge`] but the value must come from somewhere.
pub fn require<T>(flag: Option<T>, cfg: &ConfigMap, key: &str) -> Result<T, CliError>
where
    T: FromStr,
    T::Err: Display,
{
    merge(flag, cfg, key)?
        .ok_or_else(|| CliError::validation(format!("missing required parameter: {key}")))
}

/// Parse `value:prob[,value:prob...]`.
pub fn parse_support(spec: &str) -> Result<Vec<(f64, f64)>, CliError> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let Some((v, p)) = part.split_once(':') else {
            return Err(CliError::validation(format!(
                "malformed distribution entry {part:?}: expected value:prob"
            )));
        };
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|e| CliError::validation(format!("bad support value {v:?}: {e}")))?;
        let p: f64 = p
            .trim()
            .parse()
            .map_err(|e| CliError::validation(format!("bad probability {p:?}: {e}")))?;
        out.push((v, p));
    }
    Ok(out)
}

/// Parse a comma-separated list of numbers.
pub fn parse_list<T>(spec: &str, what: &str) -> Result<Vec<T>, CliError>
where
    T: FromStr,
    T::Err: Display,
{
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|e| CliError::validation(format!("bad {what} entry {s:?}: {e}")))
        })
        .collect()
}
