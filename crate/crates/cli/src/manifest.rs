use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Record written next to every output artifact.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub problem_files: Vec<String>,
    /// SHA-256 over the problem file bytes, in order.
    pub problem_digest: String,
    pub parameters: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub version: String,
    pub outputs: Vec<String>,
    pub results: BTreeMap<String, serde_json::Value>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str, files: &[(String, String)]) -> Self {
        let mut hasher = Sha256::new();
        for (_, text) in files {
            hasher.update(text.as_bytes());
        }
        Self {
            subcommand: subcommand.into(),
            problem_files: files.iter().map(|(name, _)| name.clone()).collect(),
            problem_digest: hex::encode(hasher.finalize()),
            parameters: BTreeMap::new(),
            seed: None,
            version: env!("CARGO_PKG_VERSION").into(),
            outputs: Vec::new(),
            results: BTreeMap::new(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn parameters(mut self, params: Vec<(&'static str, String)>) -> Self {
        self.parameters
            .extend(params.into_iter().map(|(k, v)| (k.to_string(), v)));
        self
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn result(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.results.insert(key.into(), value.into());
    }

    pub fn write(&self, dir: &Path, stem: &str) -> anyhow::Result<PathBuf> {
        let path = dir.join(format!("{stem}_{}_manifest.json", self.subcommand));
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}
