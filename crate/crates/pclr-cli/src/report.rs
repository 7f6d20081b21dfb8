//! Structured run reports: config hash, artifact checksums, metrics.

use pclr_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricRow {
    pub task: String,
    pub size: usize,
    pub arm: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    /// SHA-256 of the resolved configuration; identical hashes must mean
    /// identical outputs.
    pub config_hash: String,
    pub seed: u64,
    pub wall_time_secs: f64,
    /// Artifact path (relative to the run dir) -> SHA-256 of contents.
    pub artifacts: BTreeMap<String, String>,
    pub metrics: Vec<MetricRow>,
    /// Command-specific detail (fold losses, summaries, ...).
    pub details: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Hash of the resolved config's canonical JSON serialization.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let json = serde_json::to_vec(config)
        .map_err(|e| Error::config(format!("config serialization: {e}")))?;
    Ok(sha256_hex(&json))
}

pub fn write_report(report: &RunReport, out_dir: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::data(format!("report serialization: {e}")))?;
    std::fs::write(out_dir.join("report.json"), json)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let bytes = std::fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}
