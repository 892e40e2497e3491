//! Output emission: CSV with a provenance header line, or JSON with the
//! resolved config embedded. Floats print in shortest round-trip form so
//! deterministic reruns diff byte-identically.

use crate::config::{CliError, Resolved};
use std::fs;
use std::io::Write;
use std::path::PathBuf;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable naming the default output directory for relative
/// `--out` paths.
pub const OUT_DIR_ENV: &str = "TREECP_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format {other:?} (expected json or csv)")),
        }
    }
}

/// CSV header comment carrying tool version, config hash, and the config
/// itself.
pub fn csv_header(resolved: &Resolved) -> String {
    let mut line = format!("# tool=treecp version={VERSION} config_hash={}", resolved.hash());
    for (k, v) in resolved.entries() {
        line.push_str(&format!(" {k}={v}"));
    }
    line.push('\n');
    line
}

/// Wrap a serializable report with provenance fields.
pub fn json_document<T: serde::Serialize>(
    resolved: &Resolved,
    report: &T,
) -> Result<String, CliError> {
    let mut root = serde_json::Map::new();
    root.insert("tool".into(), "treecp".into());
    root.insert("version".into(), VERSION.into());
    root.insert("config_hash".into(), resolved.hash().into());
    root.insert("config".into(), resolved.json_object());
    let value = serde_json::to_value(report)
        .map_err(|e| CliError::validation(format!("serialization failed: {e}")))?;
    root.insert("report".into(), value);
    serde_json::to_string_pretty(&serde_json::Value::Object(root))
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::validation(format!("serialization failed: {e}")))
}

/// Write to `--out` (resolved against `TREECP_OUT_DIR` when relative) or
/// stdout.
pub fn emit(out: Option<&PathBuf>, payload: &str) -> Result<(), CliError> {
    match out {
        None => {
            print!("{payload}");
            std::io::stdout()
                .flush()
                .map_err(|e| CliError::validation(format!("stdout: {e}")))
        }
        Some(path) => {
            let resolved = if path.is_relative() {
                match std::env::var_os(OUT_DIR_ENV) {
                    Some(dir) => PathBuf::from(dir).join(path),
                    None => path.clone(),
                }
            } else {
                path.clone()
            };
            if let Some(parent) = resolved.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent).map_err(|e| {
                        CliError::validation(format!("cannot create {}: {e}", parent.display()))
                    })?;
                }
            }
            fs::write(&resolved, payload).map_err(|e| {
                CliError::validation(format!("cannot write {}: {e}", resolved.display()))
            })
        }
    }
}
