use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{data, CliError};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one invocation, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub args: Vec<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub seed: Option<u64>,
    pub version: &'static str,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

pub fn read_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

/// Collects inputs and outputs of a command and writes its manifest.
pub struct Recorder {
    command: &'static str,
    args: Vec<String>,
    force: bool,
    base: Option<PathBuf>,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

impl Recorder {
    /// With `base`, output paths are recorded relative to that directory.
    pub fn new(command: &'static str, argv: &[String], force: bool, base: Option<PathBuf>) -> Self {
        Recorder {
            command,
            args: argv.to_vec(),
            force,
            base,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = read_bytes(path)?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    /// Fails if any planned output already exists and overwriting is off.
    pub fn check_free(&self, paths: &[PathBuf]) -> Result<(), CliError> {
        if self.force {
            return Ok(());
        }
        let taken: Vec<String> = paths
            .iter()
            .filter(|p| p.exists())
            .map(|p| p.display().to_string())
            .collect();
        if taken.is_empty() {
            Ok(())
        } else {
            Err(data(format!(
                "refusing to overwrite {} (pass --force)",
                taken.join(", ")
            )))
        }
    }

    pub fn output(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| data(format!("{}: {e}", parent.display())))?;
        }
        fs::write(path, bytes).map_err(|e| data(format!("{}: {e}", path.display())))?;
        let shown = match &self.base {
            Some(b) => path.strip_prefix(b).unwrap_or(path).display().to_string(),
            None => path.display().to_string(),
        };
        self.outputs.push(FileDigest {
            path: shown,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn finish(self, path: &Path, seed: Option<u64>) -> Result<(), CliError> {
        let manifest = Manifest {
            command: self.command,
            args: self.args,
            inputs: self.inputs,
            outputs: self.outputs,
            seed,
            version: env!("CARGO_PKG_VERSION"),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| data(format!("{}: {e}", path.display())))
    }
}

/// `<file>.manifest.json` for single-file outputs.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}
