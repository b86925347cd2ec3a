//! Run manifests: every artifact a command writes is listed with its
//! content hash, plus a stable hash that ignores volatile fields
//! (timestamps, wall times) so reruns can be compared byte-for-byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const VOLATILE_KEYS: &[&str] = &["timestamp", "created_at", "wall_time_ms"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    /// Hash with volatile JSON fields stripped; equals `sha256` for
    /// non-JSON artifacts.
    pub stable_sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub tool_version: String,
    pub command: String,
    pub created_at: String,
    pub seed: u64,
    pub config: Value,
    #[serde(default)]
    pub flags: serde_json::Map<String, Value>,
    pub artifacts: Vec<ArtifactEntry>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: Value) -> Self {
        Self {
            version: 1,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            created_at: chrono::Utc::now().to_rfc3339(),
            seed,
            config,
            flags: serde_json::Map::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn set_flag(&mut self, key: &str, value: impl Into<Value>) {
        self.flags.insert(key.to_string(), value.into());
    }

    /// Hashes `dir/name` and records it.
    pub fn add_artifact(&mut self, dir: &Path, name: &str) -> Result<()> {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.artifacts.push(ArtifactEntry {
            path: name.to_string(),
            sha256: hex_digest(&bytes),
            stable_sha256: stable_digest(&bytes),
        });
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text =
            std::fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Re-hashes every listed artifact; returns the mismatching paths.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for a in &self.artifacts {
            let path = dir.join(&a.path);
            let bytes =
                std::fs::read(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
            if hex_digest(&bytes) != a.sha256 || stable_digest(&bytes) != a.stable_sha256 {
                bad.push(a.path.clone());
            }
        }
        Ok(bad)
    }

    pub fn stable_hash_of(&self, name: &str) -> Option<&str> {
        self.artifacts
            .iter()
            .find(|a| a.path == name)
            .map(|a| a.stable_sha256.as_str())
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Canonical digest of JSON/JSONL content with volatile keys removed.
/// Content that is not JSON hashes as-is.
fn stable_digest(bytes: &[u8]) -> String {
    let Ok(text) = std::str::from_utf8(bytes) else {
        return hex_digest(bytes);
    };
    let mut canonical_lines = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match serde_json::from_str::<Value>(line) {
            Ok(mut v) => {
                strip_volatile(&mut v);
                canonical_lines.push(serde_json::to_string(&v).expect("re-serialize"));
            }
            Err(_) => {
                // not line-delimited JSON; try the whole document
                return match serde_json::from_str::<Value>(text) {
                    Ok(mut v) => {
                        strip_volatile(&mut v);
                        hex_digest(serde_json::to_string(&v).expect("re-serialize").as_bytes())
                    }
                    Err(_) => hex_digest(bytes),
                };
            }
        }
    }
    hex_digest(canonical_lines.join("\n").as_bytes())
}

fn strip_volatile(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for key in VOLATILE_KEYS {
                map.remove(*key);
            }
            for (_, child) in map.iter_mut() {
                strip_volatile(child);
            }
        }
        Value::Array(items) => {
            for item in items {
                strip_volatile(item);
            }
        }
        _ => {}
    }
}
