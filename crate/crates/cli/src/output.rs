//! Result document and atomic file output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use finlap_core::spectral::{Cluster, SolverMeta};
use finlap_core::verify::Check;
use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
pub struct Meta {
    pub version: String,
    /// ISO-8601; the only field that differs between identical runs.
    pub timestamp: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverMeta>,
}

#[derive(Debug, Serialize)]
pub struct Document {
    pub config_echo: RunConfig,
    pub eigenvalues: Vec<Cluster>,
    pub coefficients: BTreeMap<String, Value>,
    pub report: Vec<Check>,
    pub meta: Meta,
}

impl Document {
    pub fn new(config: RunConfig) -> Self {
        Document {
            config_echo: config,
            eigenvalues: Vec::new(),
            coefficients: BTreeMap::new(),
            report: Vec::new(),
            meta: Meta {
                version: env!("CARGO_PKG_VERSION").to_string(),
                timestamp: String::new(),
                solver: None,
            },
        }
    }

    pub fn stamp(&mut self) {
        self.meta.timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    }

    pub fn failed(&self) -> bool {
        self.report.iter().any(|c| !c.passed())
    }
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Writes `bytes` to a temporary file in the target directory, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn csv_path(out: &Path) -> PathBuf {
    out.with_extension("csv")
}

pub fn table_bytes(t: &Table) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&t.header)?;
    for r in &t.rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}
