//! Staged outputs committed together, plus the per-run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects input hashes and output bytes for one subcommand. Nothing touches
/// the filesystem until [`RunContext::commit`].
pub struct RunContext {
    command: &'static str,
    config: RunConfig,
    inputs: Vec<(String, String)>,
    outputs: Vec<(PathBuf, Vec<u8>)>,
}

impl RunContext {
    pub fn new(command: &'static str, config: RunConfig) -> Self {
        RunContext {
            command,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Hashes an input file for the manifest. Fails when it cannot be read.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("{}", path.display()))?;
        self.inputs
            .push((path.display().to_string(), sha256_hex(&bytes)));
        Ok(())
    }

    pub fn output(&mut self, path: &Path, bytes: impl Into<Vec<u8>>) {
        self.outputs.push((path.to_path_buf(), bytes.into()));
    }

    fn manifest(&self) -> Vec<u8> {
        let config = serde_json::to_value(&self.config).expect("config serializes");
        let mut lines = vec![
            json!({"run": self.command, "tool": concat!("spex ", env!("CARGO_PKG_VERSION"))}),
            json!({"config": config}),
        ];
        for (path, hash) in &self.inputs {
            lines.push(json!({"input": path, "sha256": hash}));
        }
        for (path, bytes) in &self.outputs {
            lines.push(json!({"output": path.display().to_string(), "sha256": sha256_hex(bytes)}));
        }
        let mut out = String::new();
        for line in lines {
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out.into_bytes()
    }

    /// Writes every output and the manifest `<primary>.manifest.jsonl` next
    /// to the first output. All files go to temporaries first; renames happen
    /// only once every temporary is on disk.
    pub fn commit(mut self) -> Result<Vec<PathBuf>> {
        let primary = self
            .outputs
            .first()
            .map(|(p, _)| p.clone())
            .context("no outputs to write")?;
        let mut name = primary
            .file_name()
            .context("output path has no file name")?
            .to_os_string();
        name.push(".manifest.jsonl");
        let manifest_path = primary.with_file_name(name);
        let manifest = self.manifest();
        self.outputs.push((manifest_path, manifest));

        let mut staged: Vec<(PathBuf, &Path)> = Vec::with_capacity(self.outputs.len());
        for (path, bytes) in &self.outputs {
            let tmp = temp_path(path);
            if let Err(e) = fs::write(&tmp, bytes) {
                let _ = fs::remove_file(&tmp);
                discard(&staged);
                return Err(e).with_context(|| format!("{}", path.display()));
            }
            staged.push((tmp, path));
        }
        for (i, (tmp, path)) in staged.iter().enumerate() {
            if let Err(e) = fs::rename(tmp, path) {
                discard(&staged[i..]);
                return Err(e).with_context(|| format!("{}", path.display()));
            }
        }
        let written = self.outputs.into_iter().map(|(p, _)| p).collect();
        Ok(written)
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}

fn discard(staged: &[(PathBuf, &Path)]) {
    for (tmp, _) in staged {
        let _ = fs::remove_file(tmp);
    }
}
