//! One `manifest.json` per artifact-producing command.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::format::{self, CHECKPOINT_VERSION, DATASET_VERSION, TMV_VERSION};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Hash of `blob <len>\0<bytes>`, the way git names file contents, but
/// with SHA-256.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

pub fn hash_json<T: Serialize>(value: &T) -> String {
    blob_hash(&serde_json::to_vec(value).expect("plain data serializes"))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub bytes: u64,
    pub hash: String,
}

impl Artifact {
    pub fn of(path: &Path) -> CliResult<Self> {
        let data = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            bytes: data.len() as u64,
            hash: blob_hash(&data),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Versions {
    pub package: &'static str,
    pub tmv: u32,
    pub checkpoint: u32,
    pub dataset: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    /// Fully resolved settings after flags, file and defaults were merged.
    pub config: serde_json::Value,
    pub seeds: serde_json::Value,
    pub versions: Versions,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub wall_clock_seconds: f64,
    /// Hash over the command, the resolved config and every input hash.
    pub input_hash: String,
}

pub struct ManifestBuilder {
    command: String,
    args: Vec<String>,
    started: Instant,
    inputs: Vec<Artifact>,
}

impl ManifestBuilder {
    pub fn start(command: &str) -> Self {
        Self {
            command: command.into(),
            args: std::env::args().collect(),
            started: Instant::now(),
            inputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.push(Artifact::of(path)?);
        Ok(())
    }

    /// Hashes the outputs and writes `manifest.json` into `out_dir`.
    pub fn finish<C: Serialize, S: Serialize>(
        self,
        out_dir: &Path,
        config: &C,
        seeds: &S,
        outputs: &[PathBuf],
    ) -> CliResult<RunManifest> {
        let config = serde_json::to_value(config).expect("plain data serializes");
        let mut h = Sha256::new();
        h.update(self.command.as_bytes());
        h.update([0]);
        h.update(serde_json::to_vec(&config).expect("plain data serializes"));
        for a in &self.inputs {
            h.update([0]);
            h.update(a.hash.as_bytes());
        }
        let manifest = RunManifest {
            command: self.command,
            args: self.args,
            config,
            seeds: serde_json::to_value(seeds).expect("plain data serializes"),
            versions: Versions {
                package: env!("CARGO_PKG_VERSION"),
                tmv: TMV_VERSION,
                checkpoint: CHECKPOINT_VERSION,
                dataset: DATASET_VERSION,
            },
            inputs: self.inputs,
            outputs: outputs.iter().map(|p| Artifact::of(p)).collect::<CliResult<_>>()?,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            input_hash: hex(&h.finalize()),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("plain data serializes");
        format::write_file(&out_dir.join(MANIFEST_NAME), text.as_bytes())?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_known_value() {
        // same digest as `git hash-object` under sha256
        assert_eq!(
            blob_hash(b"hello world\n"),
            "0bd69098bd9b9cc5934a610ab65da429b525361147faa7b5b922919e9a23143d"
        );
        assert_ne!(blob_hash(b"a"), blob_hash(b"b"));
        assert_eq!(blob_hash(b"abc").len(), 64);
    }
}
