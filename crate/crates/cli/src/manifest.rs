//! Run manifests: everything needed to replay a filter run byte-identically
//! under the mock oracle. Manifests are deterministic by construction (no
//! wall-clock fields), so two runs of the same command produce identical
//! bytes; timing lives in the stats output instead.

use std::path::{Path, PathBuf};

use semfilter_core::engine::FilterConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest: {0}")]
    Invalid(String),
    #[error("input {path} hash mismatch: manifest {expected}, file {got}")]
    HashMismatch { path: String, expected: String, got: String },
}

/// Which oracle the run used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OracleSpec {
    Mock { truth_column: String },
    Http { base_url: String, model: String },
}

/// The run mode: one of the voting strategies or the linear-scan baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStrategy {
    Uni,
    Sim,
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateSpec {
    pub template: String,
    pub instruction: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Tool version that produced the run.
    pub tool_version: String,
    pub strategy: RunStrategy,
    pub oracle: OracleSpec,
    pub predicate: PredicateSpec,
    pub config: FilterConfig,
    pub input_path: PathBuf,
    pub input_sha256: String,
    /// Explicit input format ("jsonl"/"csv"); None means infer from the path.
    pub input_format: Option<String>,
    pub id_column: Option<String>,
    pub embeddings_path: Option<PathBuf>,
    pub embeddings_sha256: Option<String>,
    pub output_path: PathBuf,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| ManifestError::Invalid(e.to_string()))?;
        std::fs::write(path, json + "\n")
            .map_err(|e| ManifestError::Io { path: path.display().to_string(), source: e })
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ManifestError::Io { path: path.display().to_string(), source: e })?;
        serde_json::from_str(&text).map_err(|e| ManifestError::Invalid(e.to_string()))
    }

    /// Re-hashes the referenced inputs and errors if they drifted since the
    /// manifest was written.
    pub fn verify_inputs(&self) -> Result<(), ManifestError> {
        let got = crate::table_io::content_hash(&self.input_path)
            .map_err(|e| ManifestError::Invalid(e.to_string()))?;
        if got != self.input_sha256 {
            return Err(ManifestError::HashMismatch {
                path: self.input_path.display().to_string(),
                expected: self.input_sha256.clone(),
                got,
            });
        }
        if let (Some(path), Some(expected)) = (&self.embeddings_path, &self.embeddings_sha256) {
            let got = crate::table_io::content_hash(path)
                .map_err(|e| ManifestError::Invalid(e.to_string()))?;
            if &got != expected {
                return Err(ManifestError::HashMismatch {
                    path: path.display().to_string(),
                    expected: expected.clone(),
                    got,
                });
            }
        }
        Ok(())
    }
}
