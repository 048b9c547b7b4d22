//! Run manifest: scenario hash, versions, seed and a hash of every output.
//! Nothing time- or host-dependent goes in, so reruns are byte-identical.

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub scenario: String,
    pub command: String,
    pub scenario_sha256: String,
    pub seed: Option<u64>,
    pub dera_core_version: String,
    pub dera_cli_version: String,
    /// Sorted by path.
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn new(scenario: &str, command: &str, scenario_bytes: &[u8], seed: Option<u64>) -> Self {
        Self {
            scenario: scenario.to_string(),
            command: command.to_string(),
            scenario_sha256: sha256_hex(scenario_bytes),
            seed,
            dera_core_version: dera_core::VERSION.to_string(),
            dera_cli_version: env!("CARGO_PKG_VERSION").to_string(),
            files: Vec::new(),
        }
    }

    pub fn record(&mut self, path: &str, bytes: &[u8]) {
        self.files.push(FileEntry { path: path.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
    }
}
