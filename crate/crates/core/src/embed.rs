//! Per-record embeddings: fused text construction, chunk-and-average
//! embedding, and the in-memory embedding set.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{Predicate, Record, Table};

/// Whitespace-token chunk size used when a record's fused text exceeds the
/// embedding model's context window.
pub const DEFAULT_MAX_CHUNK_TOKENS: usize = 450;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding for record {id} contains a non-finite value")]
    NonFinite { id: u64 },
    #[error("no embedding stored for record {id}")]
    MissingRecord { id: u64 },
    #[error("embedding dimension must be positive")]
    ZeroDimension,
    #[error("provider returned {got} vectors for {expected} inputs")]
    CountMismatch { expected: usize, got: usize },
    #[error("embedding provider error: {0}")]
    Provider(String),
}

/// Fixed-dimension `f32` vectors keyed by record id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    vectors: BTreeMap<u64, Vec<f32>>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::ZeroDimension);
        }
        Ok(EmbeddingSet { dim, vectors: BTreeMap::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stores a vector, rejecting wrong dimensions and non-finite entries.
    pub fn insert(&mut self, id: u64, vector: Vec<f32>) -> Result<(), EmbedError> {
        if vector.len() != self.dim {
            return Err(EmbedError::DimensionMismatch { expected: self.dim, got: vector.len() });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite { id });
        }
        self.vectors.insert(id, vector);
        Ok(())
    }

    pub fn get(&self, id: u64) -> Option<&[f32]> {
        self.vectors.get(&id).map(Vec::as_slice)
    }

    pub fn require(&self, id: u64) -> Result<&[f32], EmbedError> {
        self.get(id).ok_or(EmbedError::MissingRecord { id })
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.vectors.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[f32])> {
        self.vectors.iter().map(|(&id, v)| (id, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Checks that every id yielded by `ids` has a stored vector.
    pub fn covers(&self, ids: impl IntoIterator<Item = u64>) -> Result<(), EmbedError> {
        for id in ids {
            if !self.vectors.contains_key(&id) {
                return Err(EmbedError::MissingRecord { id });
            }
        }
        Ok(())
    }
}

/// Anything that can turn texts into fixed-dimension vectors. The HTTP
/// implementation (with retry and batching) lives in the companion crate;
/// tests use closures or canned tables.
pub trait TextEmbedder {
    /// Returns one vector per input text, in input order.
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError>;
}

impl<F> TextEmbedder for F
where
    F: Fn(&[&str]) -> Result<Vec<Vec<f32>>, EmbedError>,
{
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        self(texts)
    }
}

/// Concatenates the predicate's referenced columns as `name: value` lines,
/// producing the single text that represents the record for embedding and
/// lexical scoring. Multi-column predicates fuse into one text here.
pub fn fused_text(record: &Record, columns: &[String]) -> String {
    let mut out = String::new();
    for (i, col) in columns.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(col);
        out.push_str(": ");
        out.push_str(record.column(col).unwrap_or(""));
    }
    out
}

/// Splits `text` on whitespace-token boundaries into chunks of at most
/// `max_tokens` tokens each. Chunks are contiguous and non-overlapping;
/// tokens are rejoined with single spaces. Empty text yields one empty chunk.
pub fn chunk_text(text: &str, max_tokens: usize) -> Vec<String> {
    assert!(max_tokens > 0, "max_tokens must be positive");
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.is_empty() {
        return alloc::vec![String::new()];
    }
    tokens.chunks(max_tokens).map(|c| c.join(" ")).collect()
}

/// Component-wise arithmetic mean of chunk vectors. Accumulates in `f64`.
pub fn mean_of_chunks(chunks: &[Vec<f32>]) -> Result<Vec<f32>, EmbedError> {
    let dim = chunks.first().map(Vec::len).unwrap_or(0);
    if dim == 0 {
        return Err(EmbedError::ZeroDimension);
    }
    let mut acc = alloc::vec![0.0f64; dim];
    for chunk in chunks {
        if chunk.len() != dim {
            return Err(EmbedError::DimensionMismatch { expected: dim, got: chunk.len() });
        }
        for (a, &v) in acc.iter_mut().zip(chunk) {
            *a += v as f64;
        }
    }
    let n = chunks.len() as f64;
    Ok(acc.into_iter().map(|a| (a / n) as f32).collect())
}

/// Embeds every record of `table`: fuse the predicate columns, chunk long
/// texts, embed all chunks, and average each record's chunk vectors.
///
/// All chunks are submitted in one `embed` call; the provider is responsible
/// for transport-level batching. The vector dimension is taken from the first
/// response and enforced on the rest.
pub fn embed_table(
    table: &Table,
    predicate: &Predicate,
    embedder: &dyn TextEmbedder,
    max_chunk_tokens: usize,
) -> Result<EmbeddingSet, EmbedError> {
    let columns = predicate.referenced_columns();
    let mut spans: Vec<(u64, usize, usize)> = Vec::with_capacity(table.len());
    let mut chunks: Vec<String> = Vec::new();
    for record in table.records() {
        let text = fused_text(record, columns);
        let parts = chunk_text(&text, max_chunk_tokens);
        let start = chunks.len();
        chunks.extend(parts);
        spans.push((record.id, start, chunks.len()));
    }
    if chunks.is_empty() {
        // Empty table: dimension is unknowable; pick 1 so the set is usable.
        return EmbeddingSet::new(1);
    }

    let refs: Vec<&str> = chunks.iter().map(String::as_str).collect();
    let vectors = embedder.embed(&refs)?;
    if vectors.len() != refs.len() {
        return Err(EmbedError::CountMismatch { expected: refs.len(), got: vectors.len() });
    }
    let dim = vectors.first().map(Vec::len).unwrap_or(0);
    let mut set = EmbeddingSet::new(dim)?;
    for (id, start, end) in spans {
        let mean = mean_of_chunks(&vectors[start..end])?;
        set.insert(id, mean)?;
    }
    Ok(set)
}
