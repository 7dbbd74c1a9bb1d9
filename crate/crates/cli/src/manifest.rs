use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fsar_core::sim::{run_scenario, RunConfig};
use serde::{Deserialize, Serialize};

use crate::report::REPORT_SCHEMA;
use crate::runner::RunRecord;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRACE_DIR: &str = "traces";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub config: RunConfig,
    /// Trace path relative to the manifest.
    pub trace: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub suite: String,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(suite: &str, records: &[RunRecord]) -> Self {
        Manifest {
            schema: REPORT_SCHEMA,
            suite: suite.to_string(),
            entries: records
                .iter()
                .map(|r| ManifestEntry {
                    id: r.id.clone(),
                    config: r.result.config.clone(),
                    trace: format!("{TRACE_DIR}/{}.ndjson", r.id),
                })
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

/// Writes the manifest and one NDJSON trace per run under `dir`.
pub fn write(dir: &Path, suite: &str, records: &[RunRecord]) -> Result<Manifest> {
    fs::create_dir_all(dir.join(TRACE_DIR))?;
    let manifest = Manifest::new(suite, records);
    for (e, r) in manifest.entries.iter().zip(records) {
        fs::write(dir.join(&e.trace), r.result.trace.to_ndjson())?;
    }
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub id: String,
    pub trace: String,
    pub stored: Option<PathBuf>,
    /// Whether the regenerated trace equals the stored one byte for byte.
    pub identical: Option<bool>,
}

pub fn replay(manifest_path: &Path, id: &str) -> Result<Replay> {
    let manifest = Manifest::load(manifest_path)?;
    let Some(entry) = manifest.entry(id) else {
        bail!("run `{id}` is not in {}", manifest_path.display());
    };
    let result = run_scenario(&entry.config)?;
    let trace = result.trace.to_ndjson();
    let path = manifest_path.parent().unwrap_or(Path::new(".")).join(&entry.trace);
    let stored = fs::read(&path).ok();
    Ok(Replay {
        id: id.to_string(),
        identical: stored.as_ref().map(|s| s.as_slice() == trace.as_bytes()),
        stored: stored.map(|_| path),
        trace,
    })
}
