//! Run manifests: one JSON file per invocation tying outputs to the exact
//! config and parameters that produced them.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Audit record written next to every subcommand's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    /// SHA-256 of the canonicalized (key-sorted) config document, so the
    /// hash is stable across field reordering.
    pub config_hash: String,
    pub tool_version: String,
    pub subcommand: String,
    pub parameters: BTreeMap<String, String>,
    /// Unix seconds. Honors `SOURCE_DATE_EPOCH` when set so reruns can be
    /// byte-identical.
    pub timestamp_unix: u64,
    pub outputs: Vec<String>,
}

/// Hash the config text after JSON canonicalization (objects re-serialized
/// with sorted keys), so formatting and field order do not matter.
pub fn config_hash(config_text: &str) -> anyhow::Result<String> {
    let value: serde_json::Value = serde_json::from_str(config_text)?;
    let canonical = serde_json::to_string(&value)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(hex::encode(digest))
}

fn timestamp() -> u64 {
    if let Ok(epoch) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(v) = epoch.parse() {
            return v;
        }
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(
        config_text: &str,
        subcommand: &str,
        parameters: BTreeMap<String, String>,
    ) -> anyhow::Result<Self> {
        Ok(RunManifest {
            config_hash: config_hash(config_text)?,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            parameters,
            timestamp_unix: timestamp(),
            outputs: Vec::new(),
        })
    }

    pub fn record(&mut self, path: &Path) {
        self.outputs
            .push(path.file_name().unwrap_or_default().to_string_lossy().into_owned());
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<std::path::PathBuf> {
        let path = dir.join("manifest.json");
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(&path, json)?;
        Ok(path)
    }
}
