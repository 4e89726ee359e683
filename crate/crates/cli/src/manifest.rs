//! Run manifests and artifact writing.
//!
//! Every subcommand writes a `manifest.json` next to its outputs holding
//! the fully resolved configuration, the artifact version, and a digest of
//! the input file when one was read. Re-running the same command line
//! reproduces every artifact byte for byte.

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub artifact_version: String,
    pub config: serde_json::Value,
    pub input_digest: Option<String>,
    pub seed: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            input_digest: None,
            seed,
        }
    }

    pub fn with_input<P: AsRef<Path>>(mut self, path: P) -> Result<Self> {
        let bytes = fs::read(path.as_ref())
            .with_context(|| format!("reading {}", path.as_ref().display()))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = hasher.finalize();
        let hex: String = digest.iter().map(|b| format!("{:02x}", b)).collect();
        self.input_digest = Some(hex);
        Ok(self)
    }
}

/// Directory all artifacts of one run land in.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create<P: AsRef<Path>>(path: P) -> Result<Self> {
        let root = path.as_ref().to_path_buf();
        fs::create_dir_all(&root)
            .with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(OutDir { root })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.root.join(name);
        let mut text = serde_json::to_string_pretty(value).context("serializing JSON")?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_text(&self, name: &str, content: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<PathBuf> {
        self.write_json("manifest.json", manifest)
    }
}
