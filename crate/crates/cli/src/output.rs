//! Atomic, deterministic output files and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

/// Seventeen significant digits, enough for an exact `f64` round trip.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Comma-separated CSV built row by row.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: header.join(",") + "\n",
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn floats(&mut self, values: &[f64]) {
        self.row(&values.iter().map(|&v| float(v)).collect::<Vec<_>>());
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

#[derive(Debug, Clone, Serialize)]
struct Artifact {
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a RunConfig,
    config_sha256: String,
    artifacts: &'a BTreeMap<String, Artifact>,
}

/// Writes files into one directory through a temporary file and a rename,
/// remembering each for the manifest.
pub struct Outputs {
    dir: PathBuf,
    artifacts: BTreeMap<String, Artifact>,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl Outputs {
    pub fn create(dir: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        Ok(Self {
            dir,
            artifacts: BTreeMap::new(),
        })
    }

    fn write_raw(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let target = self.dir.join(name);
        let mut tmp =
            tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| io_error(&target, e))?;
        tmp.write_all(bytes).map_err(|e| io_error(&target, e))?;
        tmp.persist(&target)
            .map_err(|e| io_error(&target, e.error))?;
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: Vec<u8>) -> Result<(), CliError> {
        self.write_raw(name, &bytes)?;
        self.artifacts.insert(
            name.to_string(),
            Artifact {
                sha256: digest(&bytes),
                bytes: bytes.len(),
            },
        );
        Ok(())
    }

    pub fn csv(&mut self, name: &str, csv: Csv) -> Result<(), CliError> {
        self.write(name, csv.into_bytes())
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut bytes =
            serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        bytes.push(b'\n');
        self.write(name, bytes)
    }

    /// `manifest.json`: the command, the merged configuration, its hash and
    /// every artifact with its hash, in name order. The hash leaves out the
    /// output directory so that identical computations hash identically.
    pub fn finish(self, command: &str, config: &RunConfig) -> Result<PathBuf, CliError> {
        let hashed = RunConfig {
            out: None,
            ..config.clone()
        };
        let config_json = serde_json::to_vec(&hashed).map_err(|e| CliError::Io(e.to_string()))?;
        let manifest = Manifest {
            command,
            config,
            config_sha256: digest(&config_json),
            artifacts: &self.artifacts,
        };
        let mut bytes =
            serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        bytes.push(b'\n');
        self.write_raw("manifest.json", &bytes)?;
        Ok(self.dir.join("manifest.json"))
    }
}
