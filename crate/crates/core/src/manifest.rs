//! Run manifests: every CLI invocation records what it read, what it
//! wrote, and the hash of the exact configuration that produced the
//! outputs. Data artifacts are bound to their manifest by the config
//! hash they embed and by the output digests the manifest lists.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Canonical JSON for hashing: `serde_json`'s maps are ordered, so any
/// key arrangement of the same object serializes identically.
pub fn canonical_json(value: &Value) -> String {
    value.to_string()
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a configuration value, independent of the key order in the
/// file it came from.
pub fn config_hash(value: &Value) -> String {
    sha256_hex(canonical_json(value).as_bytes())
}

/// Hash of any serializable config after flag overrides were applied.
pub fn config_hash_of<T: Serialize>(config: &T) -> Result<String> {
    Ok(config_hash(&serde_json::to_value(config)?))
}

/// SHA-256 digest of a file on disk.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub subcommand: String,
    /// Versions of the code that produced the run, keyed by component.
    pub modules: BTreeMap<String, String>,
    /// RFC 3339 creation time; the only field allowed to differ between
    /// reruns of an identical configuration.
    pub created_utc: String,
    pub config_hash: String,
    /// The effective configuration (after flag overrides).
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    /// SHA-256 of every input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every output file, keyed by path.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new<T: Serialize>(subcommand: &str, config: &T) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        let hash = config_hash(&config);
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_err(|_| Error::Numerical("system clock before the epoch".into()))?
            .as_secs();
        let created = chrono::DateTime::from_timestamp(secs as i64, 0)
            .ok_or_else(|| Error::Numerical("timestamp out of range".into()))?
            .to_rfc3339();
        let mut modules = BTreeMap::new();
        modules.insert("distfolio".to_string(), env!("CARGO_PKG_VERSION").to_string());
        Ok(RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            subcommand: subcommand.to_string(),
            modules,
            created_utc: created,
            config_hash: hash,
            config,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn record_seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.to_string(), seed);
    }

    /// Digest an input file the run is about to read.
    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), file_sha256(path)?);
        Ok(())
    }

    /// Digest an output file the run has written.
    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(path.display().to_string(), file_sha256(path)?);
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::save_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: RunManifest = io::load_json(path)?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "manifest schema {} unsupported (expected {MANIFEST_SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"alpha":0.95,"seed":42,"nested":{"b":2,"a":1}}"#)
            .unwrap();
        let b: Value = serde_json::from_str(r#"{"nested":{"a":1,"b":2},"seed":42,"alpha":0.95}"#)
            .unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        let c: Value = serde_json::from_str(r#"{"alpha":0.96,"seed":42,"nested":{"a":1,"b":2}}"#)
            .unwrap();
        assert_ne!(config_hash(&a), config_hash(&c));
    }

    #[test]
    fn hash_distinguishes_float_spellings_that_differ() {
        // Shortest-roundtrip serialization keeps distinct doubles distinct.
        let a: Value = serde_json::from_str(r#"{"x":0.1}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"x":0.10000000000000002}"#).unwrap();
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn manifest_records_and_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        std::fs::write(&input, b"payload").unwrap();

        #[derive(Serialize)]
        struct Cfg {
            n: usize,
        }
        let mut m = RunManifest::new("gen-synth", &Cfg { n: 8 }).unwrap();
        m.record_seed("world", 32);
        m.record_input(&input).unwrap();
        m.record_output(&input).unwrap();
        let path = dir.path().join("run.manifest.json");
        m.save(&path).unwrap();

        let back = RunManifest::load(&path).unwrap();
        assert_eq!(back.config_hash, m.config_hash);
        assert_eq!(back.seeds["world"], 32);
        assert_eq!(back.inputs.len(), 1);
        // Digest matches an independently computed SHA-256 of "payload".
        assert_eq!(
            back.inputs[&input.display().to_string()],
            "239f59ed55e737c77147cf55ad0c1b030b6d7ee748a7426952f9b852d5a935e5"
        );
        assert_eq!(back.config["n"], 8);
    }

    #[test]
    fn schema_version_gate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.manifest.json");
        let mut m = RunManifest::new("label", &serde_json::json!({"k": 1})).unwrap();
        m.schema_version = 99;
        m.save(&path).unwrap();
        assert!(RunManifest::load(&path).is_err());
    }
}
