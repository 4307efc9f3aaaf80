//! Run manifests: enough metadata to reproduce any artifact from config and
//! seed alone.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub package: String,
    pub version: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_state_hash: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the fully resolved config (after profile and seed overrides), so
/// two runs with the same manifest hash saw identical settings.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    sha256_hex(canonical.as_bytes())
}

impl Manifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, profile: Option<&str>) -> Self {
        Self {
            command: command.to_string(),
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: config_hash(cfg),
            seeds: cfg.seeds.clone(),
            profile: profile.map(str::to_string),
            eval_state_hash: None,
        }
    }

    pub fn with_eval_hash(mut self, hash: &str) -> Self {
        self.eval_state_hash = Some(hash.to_string());
        self
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let cfg = ExperimentConfig::default();
        assert_eq!(config_hash(&cfg), config_hash(&cfg.clone()));
        let other = cfg.for_seed(99);
        assert_ne!(config_hash(&cfg), config_hash(&other));
    }

    #[test]
    fn sha256_matches_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
