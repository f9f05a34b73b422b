//! CSV and summary emission. Every file leads with the schema, the seed and
//! the resolved config so that a run can be repeated from its outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct Provenance {
    pub schema: &'static str,
    pub seed: u64,
    pub config: Value,
}

impl Provenance {
    pub fn new(schema: &'static str, seed: u64, config: &impl Serialize) -> CliResult<Self> {
        let config = serde_json::to_value(config).map_err(|e| CliError::Internal(e.to_string()))?;
        Ok(Self {
            schema,
            seed,
            config,
        })
    }

    pub fn header(&self) -> Value {
        json!({ "schema": self.schema, "seed": self.seed, "config": self.config })
    }
}

/// Numeric cell text: shortest round-trip decimal, empty for missing.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))
}

/// Writes `# {schema, seed, config}` followed by a header row and the rows.
pub fn write_csv(
    path: &Path,
    prov: &Provenance,
    columns: &[&str],
    rows: &[Vec<String>],
) -> CliResult<()> {
    let mut buf = format!("# {}\n", prov.header()).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let internal = |e: csv::Error| CliError::Internal(e.to_string());
        w.write_record(columns).map_err(internal)?;
        for r in rows {
            w.write_record(r).map_err(internal)?;
        }
        w.flush().map_err(|e| CliError::Internal(e.to_string()))?;
    }
    write_file(path, &buf)
}

/// Sibling path for the machine-readable summary of `out`.
pub fn summary_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".summary.json");
    PathBuf::from(s)
}

pub fn write_summary(path: &Path, prov: &Provenance, result: &impl Serialize) -> CliResult<()> {
    let mut doc = prov.header();
    doc["result"] = serde_json::to_value(result).map_err(|e| CliError::Internal(e.to_string()))?;
    let mut text =
        serde_json::to_string_pretty(&doc).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    write_file(path, text.as_bytes())
}
