//! Run manifests: one per run, listing the resolved config and every
//! artifact with its SHA-256 digest.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{CliError, Result};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub config: Config,
    pub started: String,
    pub finished: String,
    /// (file name relative to out_dir, sha256 hex digest)
    pub artifacts: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, out_dir: &Path, config: &Config) -> Self {
        RunManifest {
            command: command.to_string(),
            seed,
            out_dir: out_dir.to_path_buf(),
            config: config.clone(),
            started: now_stamp(),
            finished: String::new(),
            artifacts: Vec::new(),
        }
    }

    /// Registers an already-written artifact file.
    pub fn add_artifact(&mut self, name: &str) -> Result<()> {
        let digest = sha256_file(&self.out_dir.join(name))?;
        self.artifacts.push((name.to_string(), digest));
        Ok(())
    }

    /// Writes `manifest.txt` into the output directory.
    pub fn write(&mut self) -> Result<PathBuf> {
        self.finished = now_stamp();
        let mut text = String::new();
        text.push_str(&format!("command = {}\n", self.command));
        text.push_str(&format!("seed = {}\n", self.seed));
        text.push_str(&format!("started = {}\n", self.started));
        text.push_str(&format!("finished = {}\n", self.finished));
        text.push_str("\n--- artifacts ---\n");
        for (name, digest) in &self.artifacts {
            text.push_str(&format!("{digest}  {name}\n"));
        }
        text.push_str("\n--- config ---\n");
        text.push_str(&self.config.to_text());
        let path = self.out_dir.join("manifest.txt");
        fs::write(&path, text)?;
        Ok(path)
    }
}

fn now_stamp() -> String {
    match std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH) {
        Ok(d) => format!("{}.{:03}", d.as_secs(), d.subsec_millis()),
        Err(_) => "0.000".to_string(),
    }
}

/// Re-reads a manifest and checks that every listed artifact exists and
/// still matches its digest.
pub fn verify_manifest(path: &Path) -> Result<usize> {
    let text = fs::read_to_string(path)?;
    let dir = path
        .parent()
        .ok_or_else(|| CliError::Input("manifest has no parent directory".to_string()))?;
    let mut checked = 0;
    let mut in_artifacts = false;
    for line in text.lines() {
        if line == "--- artifacts ---" {
            in_artifacts = true;
            continue;
        }
        if line.starts_with("--- ") && line != "--- artifacts ---" {
            in_artifacts = false;
            continue;
        }
        if !in_artifacts || line.trim().is_empty() {
            continue;
        }
        let (digest, name) = line
            .split_once("  ")
            .ok_or_else(|| CliError::Input(format!("malformed artifact line `{line}`")))?;
        let actual = sha256_file(&dir.join(name))?;
        if actual != digest {
            return Err(CliError::Input(format!(
                "artifact `{name}` digest mismatch: manifest {digest}, file {actual}"
            )));
        }
        checked += 1;
    }
    Ok(checked)
}
