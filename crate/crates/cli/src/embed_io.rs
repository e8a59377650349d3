//! Embedding persistence.
//!
//! Binary layout (little-endian throughout): magic `CSVE`, `u32` version (1),
//! `u32` dimension, `u64` record count, then per record a `u64` id followed
//! by `dim` `f32` values. Round-trips are bit-exact, so embedding files can
//! be cached and reused across queries. A JSONL form
//! (`{"id": n, "vec": [...]}` per line) is accepted for interchange; files
//! ending in `.jsonl` are read and written as JSONL.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use semfilter_core::embed::EmbeddingSet;
use serde::{Deserialize, Serialize};

pub const MAGIC: [u8; 4] = *b"CSVE";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum EmbedIoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected \"CSVE\"")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u32),
    #[error("file is truncated: header promises {expected} records, payload holds {got}")]
    Truncated { expected: u64, got: u64 },
    #[error("invalid embedding data: {0}")]
    Invalid(String),
}

fn io_err(path: &Path, source: std::io::Error) -> EmbedIoError {
    EmbedIoError::Io { path: path.display().to_string(), source }
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("jsonl")
}

/// Writes an embedding set; `.jsonl` paths get the JSONL form, everything
/// else the binary format.
pub fn write_embeddings(set: &EmbeddingSet, path: &Path) -> Result<(), EmbedIoError> {
    if is_jsonl(path) {
        write_jsonl(set, path)
    } else {
        write_binary(set, path)
    }
}

/// Reads an embedding set, dispatching on the `.jsonl` extension.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet, EmbedIoError> {
    if is_jsonl(path) {
        read_jsonl(path)
    } else {
        read_binary(path)
    }
}

fn write_binary(set: &EmbeddingSet, path: &Path) -> Result<(), EmbedIoError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| io_err(path, e));
    write(&MAGIC)?;
    write(&VERSION.to_le_bytes())?;
    write(&(set.dim() as u32).to_le_bytes())?;
    write(&(set.len() as u64).to_le_bytes())?;
    for (id, vector) in set.iter() {
        write(&id.to_le_bytes())?;
        for &v in vector {
            write(&v.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_binary(path: &Path) -> Result<EmbeddingSet, EmbedIoError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| EmbedIoError::BadMagic)?;
    if magic != MAGIC {
        return Err(EmbedIoError::BadMagic);
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(|e| io_err(path, e))?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(EmbedIoError::BadVersion(version));
    }
    r.read_exact(&mut u32buf).map_err(|e| io_err(path, e))?;
    let dim = u32::from_le_bytes(u32buf) as usize;
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf).map_err(|e| io_err(path, e))?;
    let count = u64::from_le_bytes(u64buf);

    let mut set = EmbeddingSet::new(dim).map_err(|e| EmbedIoError::Invalid(e.to_string()))?;
    let mut vec_buf = vec![0u8; dim * 4];
    for i in 0..count {
        if r.read_exact(&mut u64buf).is_err() {
            return Err(EmbedIoError::Truncated { expected: count, got: i });
        }
        let id = u64::from_le_bytes(u64buf);
        if r.read_exact(&mut vec_buf).is_err() {
            return Err(EmbedIoError::Truncated { expected: count, got: i });
        }
        let vector: Vec<f32> = vec_buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        set.insert(id, vector).map_err(|e| EmbedIoError::Invalid(e.to_string()))?;
    }
    Ok(set)
}

#[derive(Serialize, Deserialize)]
struct JsonlRow {
    id: u64,
    vec: Vec<f32>,
}

fn write_jsonl(set: &EmbeddingSet, path: &Path) -> Result<(), EmbedIoError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for (id, vector) in set.iter() {
        let row = JsonlRow { id, vec: vector.to_vec() };
        serde_json::to_writer(&mut w, &row).map_err(|e| EmbedIoError::Invalid(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_jsonl(path: &Path) -> Result<EmbeddingSet, EmbedIoError> {
    use std::io::BufRead;
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut set: Option<EmbeddingSet> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonlRow = serde_json::from_str(&line)
            .map_err(|e| EmbedIoError::Invalid(format!("line {}: {e}", idx + 1)))?;
        let set = match &mut set {
            Some(s) => s,
            None => {
                set = Some(
                    EmbeddingSet::new(row.vec.len())
                        .map_err(|e| EmbedIoError::Invalid(e.to_string()))?,
                );
                set.as_mut().unwrap()
            }
        };
        set.insert(row.id, row.vec)
            .map_err(|e| EmbedIoError::Invalid(format!("line {}: {e}", idx + 1)))?;
    }
    set.map_or_else(|| EmbeddingSet::new(1).map_err(|e| EmbedIoError::Invalid(e.to_string())), Ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set() -> EmbeddingSet {
        let mut set = EmbeddingSet::new(4).unwrap();
        set.insert(3, vec![0.25, -1.5, 3.25e-7, 1.0e20]).unwrap();
        set.insert(1, vec![0.0, -0.0, f32::MIN_POSITIVE, f32::MAX]).unwrap();
        set.insert(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        set
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let set = sample_set();
        let f = tempfile::Builder::new().suffix(".bin").tempfile().unwrap();
        write_embeddings(&set, f.path()).unwrap();
        let back = read_embeddings(f.path()).unwrap();
        assert_eq!(set, back);
        for (id, v) in set.iter() {
            let b = back.get(id).unwrap();
            for (x, y) in v.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let set = sample_set();
        let f = tempfile::Builder::new().suffix(".jsonl").tempfile().unwrap();
        write_embeddings(&set, f.path()).unwrap();
        let back = read_embeddings(f.path()).unwrap();
        assert_eq!(set, back);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let f = tempfile::Builder::new().suffix(".bin").tempfile().unwrap();
        std::fs::write(f.path(), b"XXXXrestoffile").unwrap();
        assert!(matches!(read_embeddings(f.path()).unwrap_err(), EmbedIoError::BadMagic));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let set = sample_set();
        let f = tempfile::Builder::new().suffix(".bin").tempfile().unwrap();
        write_embeddings(&set, f.path()).unwrap();
        let mut bytes = std::fs::read(f.path()).unwrap();
        bytes[4] = 9; // version field
        std::fs::write(f.path(), &bytes).unwrap();
        assert!(matches!(read_embeddings(f.path()).unwrap_err(), EmbedIoError::BadVersion(9)));
    }

    #[test]
    fn overstated_count_is_truncation() {
        let set = sample_set();
        let f = tempfile::Builder::new().suffix(".bin").tempfile().unwrap();
        write_embeddings(&set, f.path()).unwrap();
        let mut bytes = std::fs::read(f.path()).unwrap();
        // Count lives at offset 12; claim one more record than the payload.
        bytes[12..20].copy_from_slice(&4u64.to_le_bytes());
        std::fs::write(f.path(), &bytes).unwrap();
        match read_embeddings(f.path()).unwrap_err() {
            EmbedIoError::Truncated { expected: 4, got: 3 } => {}
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn truncated_payload_is_detected() {
        let set = sample_set();
        let f = tempfile::Builder::new().suffix(".bin").tempfile().unwrap();
        write_embeddings(&set, f.path()).unwrap();
        let bytes = std::fs::read(f.path()).unwrap();
        std::fs::write(f.path(), &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(
            read_embeddings(f.path()).unwrap_err(),
            EmbedIoError::Truncated { .. }
        ));
    }
}
