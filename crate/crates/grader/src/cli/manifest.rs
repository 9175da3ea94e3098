//! Run manifests: content digests of every input, a config snapshot, usage
//! and cost totals, and result counts. A manifest is written even when a run
//! fails partway, so partial output is always attributable.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::core::TokenUsage;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UsageSummary {
    /// Sum of per-item input tokens across all emitted rows.
    pub input_tokens: u64,
    /// Sum of per-item output tokens across all emitted rows.
    pub output_tokens: u64,
    /// API calls made by this run (cache-reused rows are excluded).
    pub calls_made: u64,
    pub estimated_cost_usd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunCounts {
    pub graded: usize,
    pub auto_zero: usize,
    pub escalated: usize,
    pub skipped: usize,
    /// Rows reused from a previous run with matching input digests.
    pub reused: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub created_utc: String,
    pub mode: String,
    /// `complete`, `transport_exhausted`, `ingest_error`, or `failed`.
    pub status: String,
    pub config: Config,
    pub inputs: Vec<InputDigest>,
    pub usage: UsageSummary,
    pub counts: RunCounts,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(mode: &str, config: &Config, inputs: Vec<InputDigest>) -> RunManifest {
        let created = chrono::Utc::now();
        let digest_tag: String = {
            let mut hasher = Sha256::new();
            for input in &inputs {
                hasher.update(input.sha256.as_bytes());
            }
            hex::encode(hasher.finalize())[..8].to_string()
        };
        RunManifest {
            run_id: format!("run-{}-{digest_tag}", created.format("%Y%m%dT%H%M%SZ")),
            created_utc: created.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            mode: mode.to_string(),
            status: "incomplete".to_string(),
            config: config.clone(),
            inputs,
            usage: UsageSummary::default(),
            counts: RunCounts::default(),
            warnings: Vec::new(),
        }
    }

    pub fn set_usage(&mut self, totals: TokenUsage, calls_made: u64, estimated_cost_usd: f64) {
        self.usage = UsageSummary {
            input_tokens: totals.input_tokens,
            output_tokens: totals.output_tokens,
            calls_made,
            estimated_cost_usd,
        };
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json + "\n")
    }

    pub fn load(path: &Path) -> Option<RunManifest> {
        let text = std::fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// True when this manifest's input digests exactly match `inputs`.
    pub fn inputs_match(&self, inputs: &[InputDigest]) -> bool {
        self.inputs == inputs
    }
}

/// SHA-256 of a file's bytes.
pub fn digest_file(path: &Path) -> std::io::Result<InputDigest> {
    let bytes = std::fs::read(path)?;
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Digests every input up front, before grading starts.
pub fn digest_inputs(paths: &[&Path]) -> std::io::Result<Vec<InputDigest>> {
    paths.iter().map(|p| digest_file(p)).collect()
}

pub fn manifest_path(out_dir: &Path) -> PathBuf {
    out_dir.join("manifest.json")
}
