//! Run directories, manifests and atomic file output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::{NamedTempFile, TempDir};

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

/// Everything that determines a run's outputs. Deliberately excludes the
/// wall-clock time so identical invocations produce identical manifests.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub config: Value,
    pub inputs: BTreeMap<String, InputFile>,
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, jobs: Option<usize>, config: Value) -> Self {
        Manifest {
            tool: "qfsum",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            seed,
            jobs,
            config,
            inputs: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, role: &str, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::input(path, e))?;
        self.inputs.insert(
            role.to_string(),
            InputFile {
                path: path.display().to_string(),
                sha256: hex::encode(Sha256::digest(&bytes)),
            },
        );
        Ok(())
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("manifest serializes");
        hex::encode(&Sha256::digest(&bytes)[..6])
    }
}

/// Outputs are staged in a hidden temporary directory and renamed into
/// place only when the command succeeds.
pub struct RunDir {
    staging: TempDir,
    final_path: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path, manifest: &Manifest) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::output(root, e))?;
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
        let base = format!("{stamp}-{}", manifest.hash());
        let mut final_path = root.join(&base);
        let mut n = 1;
        while final_path.exists() {
            final_path = root.join(format!("{base}-{n}"));
            n += 1;
        }
        let staging = tempfile::Builder::new()
            .prefix(".staging-")
            .tempdir_in(root)
            .map_err(|e| CliError::output(root, e))?;
        let dir = RunDir { staging, final_path };
        dir.write_json("manifest.json", manifest)?;
        Ok(dir)
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        atomic_write(&self.staging.path().join(name), |w| w.write_all(bytes))
    }

    pub fn write_with(&self, name: &str, f: impl FnOnce(&mut dyn Write) -> qfsum_core::Result<()>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(qfsum_core::Error::from)?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    pub fn write_jsonl<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut bytes = Vec::new();
        for row in rows {
            serde_json::to_writer(&mut bytes, row).map_err(qfsum_core::Error::from)?;
            bytes.push(b'\n');
        }
        self.write_bytes(name, &bytes)
    }

    /// Move the staged outputs to their final location.
    pub fn finish(self) -> Result<PathBuf, CliError> {
        let staged = self.staging.keep();
        fs::rename(&staged, &self.final_path).map_err(|e| {
            let _ = fs::remove_dir_all(&staged);
            CliError::output(&self.final_path, e)
        })?;
        Ok(self.final_path)
    }
}

/// Write through a temporary file in the target directory, then rename.
pub fn atomic_write(path: &Path, f: impl FnOnce(&mut NamedTempFile) -> std::io::Result<()>) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::output(path, e))?;
    f(&mut tmp).map_err(|e| CliError::output(path, e))?;
    tmp.persist(path).map_err(|e| CliError::output(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_hash_tracks_settings() {
        let a = Manifest::new("train", Some(1), None, serde_json::json!({"x": 1}));
        let b = Manifest::new("train", Some(1), None, serde_json::json!({"x": 1}));
        let c = Manifest::new("train", Some(2), None, serde_json::json!({"x": 1}));
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn failed_runs_leave_nothing_behind() {
        let root = tempfile::tempdir().unwrap();
        let m = Manifest::new("x", None, None, Value::Null);
        {
            let run = RunDir::create(root.path(), &m).unwrap();
            run.write_bytes("a.txt", b"partial").unwrap();
        }
        assert_eq!(fs::read_dir(root.path()).unwrap().count(), 0);
        let run = RunDir::create(root.path(), &m).unwrap();
        run.write_bytes("a.txt", b"done").unwrap();
        let path = run.finish().unwrap();
        assert_eq!(fs::read(path.join("a.txt")).unwrap(), b"done");
        assert!(path.join("manifest.json").exists());
    }
}
