//! Output directory with a manifest of hashed artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: Option<u64>,
    config: &'a C,
    config_sha256: String,
    inputs: &'a BTreeMap<String, String>,
    artifacts: &'a BTreeMap<String, String>,
}

pub struct Bundle {
    dir: PathBuf,
    inputs: BTreeMap<String, String>,
    artifacts: BTreeMap<String, String>,
}

impl Bundle {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), inputs: BTreeMap::new(), artifacts: BTreeMap::new() })
    }

    /// Reads an input file and records its hash.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        self.artifacts.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> activity_hmm::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<(), CliError> {
        self.write_with(name, |buf| activity_hmm::io::write_json(value, buf))
    }

    pub fn finish<C: Serialize>(self, command: &str, seed: Option<u64>, config: &C) -> Result<(), CliError> {
        let config_json = serde_json::to_vec(config).map_err(|e| CliError::Config(e.to_string()))?;
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config,
            config_sha256: sha256_hex(&config_json),
            inputs: &self.inputs,
            artifacts: &self.artifacts,
        };
        let mut buf = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Config(e.to_string()))?;
        buf.push(b'\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, buf).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
    }
}
