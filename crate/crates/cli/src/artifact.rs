//! JSON artifacts stamped with the configuration hash, laid out as
//! `output-dir/{n}/{seed}/{name}.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub config_hash: String,
    pub n: Option<usize>,
    pub seed: u64,
    pub data: T,
}

pub fn cell_dir(output: &Path, n: usize, seed: u64) -> PathBuf {
    output.join(n.to_string()).join(seed.to_string())
}

pub fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn write<T: Serialize>(path: &Path, artifact: &Artifact<T>) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(artifact)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads an artifact written under the same configuration.
pub fn read<T: DeserializeOwned>(path: &Path, config_hash: &str) -> Result<Artifact<T>, CliError> {
    if !path.exists() {
        return Err(CliError::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let artifact: Artifact<T> = serde_json::from_str(&text)?;
    if artifact.config_hash != config_hash {
        return Err(CliError::StaleArtifact(path.to_path_buf()));
    }
    Ok(artifact)
}

pub fn read_optional<T: DeserializeOwned>(
    path: &Path,
    config_hash: &str,
) -> Result<Option<T>, CliError> {
    match read(path, config_hash) {
        Ok(a) => Ok(Some(a.data)),
        Err(CliError::MissingArtifact(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// SHA-256 of each file, keyed by file name.
pub fn file_digests(paths: &[&Path]) -> Result<BTreeMap<String, String>, CliError> {
    paths
        .iter()
        .map(|p| {
            let bytes = fs::read(p)?;
            let name = p.file_name().map_or_else(
                || p.display().to_string(),
                |n| n.to_string_lossy().into_owned(),
            );
            Ok((name, hex::encode(Sha256::digest(&bytes))))
        })
        .collect()
}
