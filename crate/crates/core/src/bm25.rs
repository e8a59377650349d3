//! BM25 lexical similarity over record texts.
//!
//! Used as the lexical half of the hybrid clustering distance. Scores are
//! symmetrized (mean of query→document and document→query directions) since a
//! distance needs `s(a,b) = s(b,a)` while raw BM25 is asymmetric.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::math::ln;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Bm25Error {
    #[error("record {id} is not in the lexical corpus")]
    MissingDocument { id: u64 },
    #[error("lexical corpus is empty")]
    EmptyCorpus,
}

/// Lowercased alphanumeric runs. "It's True!" -> ["it", "s", "true"].
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                current.push(lc);
            }
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Debug, Clone)]
struct DocStats {
    term_freq: BTreeMap<String, u32>,
    len: u32,
}

/// Tokenized corpus with the per-term and per-document statistics BM25 needs.
#[derive(Debug, Clone)]
pub struct Bm25Corpus {
    docs: BTreeMap<u64, DocStats>,
    doc_freq: BTreeMap<String, u32>,
    avg_len: f64,
}

impl Bm25Corpus {
    /// Builds the corpus from `(record id, text)` pairs.
    pub fn build<'a>(texts: impl IntoIterator<Item = (u64, &'a str)>) -> Result<Self, Bm25Error> {
        let mut docs = BTreeMap::new();
        let mut doc_freq: BTreeMap<String, u32> = BTreeMap::new();
        let mut total_len: u64 = 0;
        for (id, text) in texts {
            let tokens = tokenize(text);
            let mut term_freq: BTreeMap<String, u32> = BTreeMap::new();
            for tok in &tokens {
                *term_freq.entry(tok.clone()).or_insert(0) += 1;
            }
            for term in term_freq.keys() {
                *doc_freq.entry(term.clone()).or_insert(0) += 1;
            }
            total_len += tokens.len() as u64;
            docs.insert(id, DocStats { term_freq, len: tokens.len() as u32 });
        }
        if docs.is_empty() {
            return Err(Bm25Error::EmptyCorpus);
        }
        let avg_len = total_len as f64 / docs.len() as f64;
        Ok(Bm25Corpus { docs, doc_freq, avg_len })
    }

    pub fn contains(&self, id: u64) -> bool {
        self.docs.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        // +1 inside the log keeps IDF nonnegative for very common terms.
        ln(1.0 + (n - df + 0.5) / (df + 0.5))
    }

    /// Directional BM25: the unique terms of `query_id`'s text scored against
    /// the document of `doc_id`.
    pub fn score(&self, query_id: u64, doc_id: u64, k1: f64, b: f64) -> Result<f64, Bm25Error> {
        let query = self.docs.get(&query_id).ok_or(Bm25Error::MissingDocument { id: query_id })?;
        let doc = self.docs.get(&doc_id).ok_or(Bm25Error::MissingDocument { id: doc_id })?;
        let len_norm = 1.0 - b + b * doc.len as f64 / self.avg_len;
        let mut total = 0.0;
        for term in query.term_freq.keys() {
            let tf = doc.term_freq.get(term).copied().unwrap_or(0) as f64;
            if tf == 0.0 {
                continue;
            }
            total += self.idf(term) * tf * (k1 + 1.0) / (tf + k1 * len_norm);
        }
        Ok(total)
    }

    /// Symmetric similarity: mean of both scoring directions.
    pub fn symmetric_score(&self, a: u64, b_id: u64, k1: f64, b: f64) -> Result<f64, Bm25Error> {
        Ok(0.5 * (self.score(a, b_id, k1, b)? + self.score(b_id, a, k1, b)?))
    }
}
