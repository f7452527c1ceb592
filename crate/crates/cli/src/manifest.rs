use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::Failure;

/// SHA-256 of the canonical (sorted-key, compact) JSON text.
pub fn config_hash(config: &Value) -> String {
    // serde_json maps are ordered by key, so this is canonical
    let text = serde_json::to_string(config).expect("values serialise");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub artifact_version: String,
    pub seed: u64,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub files: Vec<String>,
}

/// Collects the files written by one command and writes its manifest last.
pub struct Outputs {
    pub dir: PathBuf,
    pub prefix: String,
    files: Vec<String>,
    started: f64,
}

impl Outputs {
    pub fn new(dir: &Path, prefix: &str) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        Ok(Outputs { dir: dir.to_path_buf(), prefix: prefix.to_string(), files: Vec::new(), started: unix_now() })
    }

    pub fn write(&mut self, suffix: &str, contents: &[u8]) -> Result<PathBuf, Failure> {
        let name = format!("{}_{suffix}", self.prefix);
        let path = self.dir.join(&name);
        std::fs::write(&path, contents).map_err(|e| Failure::io(&path, e))?;
        self.files.push(name);
        Ok(path)
    }

    pub fn finish(self, command: &str, config: &Value, seed: u64) -> Result<PathBuf, Failure> {
        let manifest = RunManifest {
            command: command.to_string(),
            config_hash: config_hash(config),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            started_unix: self.started,
            finished_unix: unix_now(),
            files: self.files,
        };
        let path = self.dir.join(format!("{}_manifest.json", self.prefix));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        std::fs::write(&path, text + "\n").map_err(|e| Failure::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"b": 1, "a": {"y": [1, 2], "x": null}}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"a": {"x": null, "y": [1, 2]}, "b": 1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        let c: Value = serde_json::from_str(r#"{"a": {"x": null, "y": [2, 1]}, "b": 1}"#).unwrap();
        assert_ne!(config_hash(&a), config_hash(&c));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
