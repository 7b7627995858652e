//! Run manifest: provenance record written for every run that gets past
//! configuration validation — including runs stopped by a numerical guard.

use serde::Serialize;
use std::path::Path;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    /// SHA-256 of the raw configuration document.
    pub config_sha256: String,
    pub seed_override: Option<u64>,
    pub threads: usize,
    pub runtime_seconds: f64,
    /// "ok" or "guard_failure".
    pub status: &'static str,
    pub error: Option<String>,
    /// Artifact file names written alongside this manifest.
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn write(&self, out_dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(out_dir.join("manifest.json"), text + "\n")
    }
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        use std::fmt::Write;
        let _ = write!(out, "{b:02x}");
    }
    out
}
