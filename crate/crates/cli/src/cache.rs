//! Persistent oracle cache: JSONL of `{"pkey", "rid", "label", "pt", "ct"}`
//! keyed by (predicate hash, record id). Loaded fully at open; fresh results
//! are appended after each batch, so a repeated query costs zero new calls.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt cache line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CacheEntry {
    pub pkey: u64,
    pub rid: u64,
    pub label: bool,
    pub pt: u64,
    pub ct: u64,
}

/// In-memory view of the cache file plus an append handle.
#[derive(Debug)]
pub struct OracleCache {
    path: PathBuf,
    entries: HashMap<(u64, u64), CacheEntry>,
}

impl OracleCache {
    /// Opens (or creates) a cache file and loads every entry.
    pub fn open(path: &Path) -> Result<Self, CacheError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| CacheError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| CacheError::Io {
                    path: path.display().to_string(),
                    source: e,
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry = serde_json::from_str(&line).map_err(|e| {
                    CacheError::Corrupt { line: idx + 1, message: e.to_string() }
                })?;
                entries.insert((entry.pkey, entry.rid), entry);
            }
        }
        Ok(OracleCache { path: path.to_path_buf(), entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, pkey: u64, rid: u64) -> Option<&CacheEntry> {
        self.entries.get(&(pkey, rid))
    }

    /// Appends fresh entries to the file and the in-memory map. One writer at
    /// a time; batches are flushed atomically at the end of the call.
    pub fn append(&mut self, fresh: &[CacheEntry]) -> Result<(), CacheError> {
        if fresh.is_empty() {
            return Ok(());
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| CacheError::Io { path: self.path.display().to_string(), source: e })?;
        let mut w = BufWriter::new(file);
        for entry in fresh {
            serde_json::to_writer(&mut w, entry)
                .map_err(|e| CacheError::Corrupt { line: 0, message: e.to_string() })?;
            w.write_all(b"\n").map_err(|e| CacheError::Io {
                path: self.path.display().to_string(),
                source: e,
            })?;
            self.entries.insert((entry.pkey, entry.rid), *entry);
        }
        w.flush()
            .map_err(|e| CacheError::Io { path: self.path.display().to_string(), source: e })
    }
}
