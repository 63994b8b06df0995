//! Provenance records written next to every stage artifact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::failure::{Failure, ResultExt};

#[derive(Debug, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub versions: BTreeMap<String, String>,
    pub config: Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).user_ctx(|| format!("reading {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hashes(paths: &[PathBuf]) -> Result<Vec<FileHash>, Failure> {
    paths
        .iter()
        .map(|p| {
            Ok(FileHash {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

/// `<artifact>.manifest.json`.
pub fn path_for(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

/// Hashes inputs and outputs and writes the manifest atomically.
pub fn write(
    path: &Path,
    command: &str,
    config: Value,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> Result<(), Failure> {
    let versions = BTreeMap::from([
        ("neurodeploy".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("neurodeploy-core".to_string(), neurodeploy_core::VERSION.to_string()),
    ]);
    let m = Manifest {
        command: command.into(),
        versions,
        config,
        inputs: hashes(inputs)?,
        outputs: hashes(outputs)?,
    };
    crate::commands::write_json(path, &m)
}
