//! Artifact tree writer and manifest. Every file written through
//! [`ArtifactWriter`] is hashed and attributed to the operation that produced
//! it; the manifest is the only file carrying a timestamp.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::RunError;

pub const MANIFEST: &str = "manifest.json";
pub const FAILURE: &str = "failure.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub producer: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub timestamp_unix: u64,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

pub struct ArtifactWriter {
    root: PathBuf,
    files: Vec<ManifestEntry>,
}

impl ArtifactWriter {
    pub fn create(root: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(root)?;
        // a previous failure record must not outlive this run
        let _ = fs::remove_file(root.join(FAILURE));
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn text(&mut self, rel: &str, body: &str, producer: &str) -> Result<(), RunError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, body)?;
        self.files.push(ManifestEntry {
            path: rel.to_string(),
            sha256: sha256_hex(body.as_bytes()),
            producer: producer.to_string(),
        });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T, producer: &str) -> Result<(), RunError> {
        self.text(rel, &to_json(value), producer)
    }

    pub fn finish(mut self) -> Result<Manifest, RunError> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            files: self.files,
        };
        fs::write(self.root.join(MANIFEST), to_json(&manifest))?;
        Ok(manifest)
    }
}

/// Machine-readable record of the failure that ended a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub exit_code: i32,
    pub kind: String,
    pub invariant: Option<String>,
    pub detail: String,
}

pub fn write_failure(root: &Path, err: &RunError) -> Result<(), RunError> {
    let (kind, invariant) = match err {
        RunError::Config { field, .. } => ("config", Some(field.clone())),
        RunError::Stall { .. } => ("stall", None),
        RunError::Invariant { name, .. } => ("invariant", Some(name.clone())),
        RunError::Missing(_) => ("missing", None),
        RunError::Failed(_) | RunError::Io(_) => ("error", None),
    };
    let rec = FailureRecord {
        exit_code: err.exit_code(),
        kind: kind.into(),
        invariant,
        detail: err.to_string(),
    };
    fs::create_dir_all(root)?;
    fs::write(root.join(FAILURE), to_json(&rec))?;
    Ok(())
}
