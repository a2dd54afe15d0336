//! Run manifests: configuration snapshot, seed and content hashes of inputs
//! and outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Git-style blob hash: SHA-256 of `"blob <len>\0" + content`, hex encoded.
pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedFile {
    pub path: PathBuf,
    pub blob: String,
}

/// Hashes a file, or every regular file below a directory (sorted by path).
pub fn hash_path(path: &Path) -> Result<Vec<HashedFile>> {
    let meta = fs::metadata(path).map_err(Error::io(path))?;
    if meta.is_file() {
        let bytes = fs::read(path).map_err(Error::io(path))?;
        return Ok(vec![HashedFile {
            path: path.to_path_buf(),
            blob: blob_hash(&bytes),
        }]);
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .map_err(Error::io(path))?
        .map(|e| e.map(|e| e.path()).map_err(Error::io(path)))
        .collect::<Result<_>>()?;
    entries.sort();
    let mut out = Vec::new();
    for e in entries {
        // a run's own manifest is not one of its inputs
        if e.file_name().is_some_and(|n| n == MANIFEST_NAME) {
            continue;
        }
        out.extend(hash_path(&e)?);
    }
    Ok(out)
}

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<HashedFile>,
    pub outputs: Vec<HashedFile>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.extend(hash_path(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.extend(hash_path(path)?);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(Error::io(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_of_empty_and_known_content() {
        // sha256 of "blob 0\0"
        assert_eq!(blob_hash(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
        assert_eq!(blob_hash(b"abc"), blob_hash(b"abc"));
        assert_ne!(blob_hash(b"abc"), blob_hash(b"abd"));
    }

    #[test]
    fn directory_hash_is_sorted_and_skips_manifest() {
        let d = tempfile::tempdir().unwrap();
        fs::write(d.path().join("b"), "2").unwrap();
        fs::write(d.path().join("a"), "1").unwrap();
        fs::write(d.path().join(MANIFEST_NAME), "{}").unwrap();
        let h = hash_path(d.path()).unwrap();
        assert_eq!(h.len(), 2);
        assert!(h[0].path.ends_with("a"));
        assert_eq!(h[1].blob, blob_hash(b"2"));
    }
}
