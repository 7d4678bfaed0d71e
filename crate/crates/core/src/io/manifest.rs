use super::IoError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

/// Provenance of one CLI run, written next to its main output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subcommand: String,
    pub crate_version: String,
    /// SHA-256 of the fully resolved configuration as TOML.
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    /// `(stage, seconds)`.
    pub timings: Vec<(String, f64)>,
    pub threads: usize,
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn new(subcommand: &str, resolved_config: &str, seeds: BTreeMap<String, u64>) -> Self {
        Manifest {
            subcommand: subcommand.to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(resolved_config.as_bytes()),
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
            threads: rayon::current_num_threads(),
            notes: Vec::new(),
        }
    }

    pub fn add_file(list: &mut Vec<FileHash>, path: &Path) -> Result<(), IoError> {
        let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
        list.push(FileHash { path: path.display().to_string(), sha256: sha256_hex(&bytes) });
        Ok(())
    }

    /// Manifest path for an output: `<output>.manifest.json`.
    pub fn path_for(output: &Path) -> std::path::PathBuf {
        let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        output.with_file_name(name)
    }

    pub fn write(&self, output: &Path) -> Result<(), IoError> {
        let path = Self::path_for(output);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| IoError::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_path() {
        assert_eq!(Manifest::path_for(Path::new("out/v.sasv")), Path::new("out/v.sasv.manifest.json"));
    }
}
