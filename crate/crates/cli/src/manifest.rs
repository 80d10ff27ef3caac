//! Output-directory bookkeeping: the artifact manifest and the run lock.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";
const LOCK: &str = ".riscovert.lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub sha256: String,
    pub bytes: u64,
    pub config_hash: String,
    pub seed: u64,
    /// Free-form facts about the artifact (class counts, row counts, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub info: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, ArtifactRecord>,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::artifact(format!("{}: {e}", path.display())))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(&path).map_err(|e| CliError::artifact(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::artifact(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_output(&dir.join(MANIFEST), text.as_bytes())
    }

    /// Hashes `name` inside `dir` and records it.
    pub fn record(
        &mut self,
        dir: &Path,
        name: &str,
        config_hash: &str,
        seed: u64,
        info: BTreeMap<String, serde_json::Value>,
    ) -> Result<(), CliError> {
        let (sha256, bytes) = sha256_file(&dir.join(name))?;
        self.artifacts.insert(
            name.to_string(),
            ArtifactRecord { sha256, bytes, config_hash: config_hash.to_string(), seed, info },
        );
        Ok(())
    }

    /// Fails with a corrupt-artifact error if `name` no longer matches its record.
    pub fn check(&self, dir: &Path, name: &str) -> Result<(), CliError> {
        let path = dir.join(name);
        if !path.exists() {
            return Err(CliError::artifact(format!("missing artifact {}", path.display())));
        }
        if let Some(rec) = self.artifacts.get(name) {
            let (digest, _) = sha256_file(&path)?;
            if digest != rec.sha256 {
                return Err(CliError::artifact(format!("{} does not match its manifest digest", path.display())));
            }
        }
        Ok(())
    }
}

pub fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

/// Exclusive claim on an output directory, released on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(LOCK);
        let mut file = OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                CliError::config(format!(
                    "{} is in use by another run (remove {} if no other run is active)",
                    dir.display(),
                    path.display()
                ))
            } else {
                CliError::config(format!("cannot lock {}: {e}", dir.display()))
            }
        })?;
        let _ = writeln!(file, "{}", std::process::id());
        Ok(Self { path })
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
