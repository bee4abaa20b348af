//! Run manifests. The digest covers the command and its resolved
//! configuration (including digests of every input), never paths or
//! timings, so identical inputs give identical digests wherever they live.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use factcons::corpus::format::write_atomic;
use factcons::digest::sha256_hex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Everything that determines the artifacts.
    pub config: BTreeMap<String, Value>,
    pub manifest_digest: String,
    /// Resolved input and output locations; informational only.
    pub paths: BTreeMap<String, String>,
    /// Artifact file name to SHA-256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
    pub timings_ms: BTreeMap<String, u64>,
}

impl Manifest {
    pub fn new(command: &str, config: BTreeMap<String, Value>) -> Self {
        let manifest_digest = config_digest(command, &config);
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            manifest_digest,
            paths: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn path(&mut self, name: &str, path: &Path) {
        self.paths.insert(name.into(), path.display().to_string());
    }

    pub fn artifact(&mut self, name: &str, bytes: &[u8]) {
        self.artifacts.insert(name.into(), sha256_hex(bytes));
    }

    pub fn timing(&mut self, phase: &str, d: Duration) {
        self.timings_ms.insert(phase.into(), d.as_millis() as u64);
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// `serde_json::Value` objects are key-sorted, so this is canonical.
pub fn config_digest(command: &str, config: &BTreeMap<String, Value>) -> String {
    let v = serde_json::json!({ "command": command, "config": config });
    sha256_hex(v.to_string().as_bytes())
}
