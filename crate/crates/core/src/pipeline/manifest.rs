use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::survey::{CostLedger, ProviderMode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub sample: u64,
    pub bootstrap: u64,
    pub mock: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub complete: bool,
    /// Digest of the settings the stage read when it ran.
    #[serde(default)]
    pub config_digest: String,
    /// Artifact path (relative to the run directory) to SHA-256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
    /// Provider usage of the stage, if it queried one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger: Option<CostLedger>,
}

/// State of a run directory: configuration identity, finished stages with
/// their artifact digests, and accumulated cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_digest: String,
    pub registry_version: String,
    pub provider: ProviderMode,
    pub seeds: Seeds,
    pub stages: BTreeMap<String, StageRecord>,
    pub ledger: CostLedger,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Option<Self>> {
        let path = run_dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// True when `stage` finished under settings with digest `config_digest`
    /// and all of its artifacts still have the recorded digests. Upstream
    /// stages are not consulted.
    pub fn is_current(&self, stage: &str, config_digest: &str, run_dir: &Path) -> bool {
        let Some(rec) = self.stages.get(stage) else {
            return false;
        };
        rec.complete
            && rec.config_digest == config_digest
            && rec
                .artifacts
                .iter()
                .all(|(rel, digest)| std::fs::read(run_dir.join(rel)).is_ok_and(|bytes| sha256_hex(&bytes) == *digest))
    }

    /// Forget `stage` and every stage after it in `order`.
    pub fn invalidate_from(&mut self, stage: &str, order: &[&str]) {
        if let Some(pos) = order.iter().position(|s| *s == stage) {
            for s in &order[pos..] {
                self.stages.remove(*s);
            }
        }
    }
}
