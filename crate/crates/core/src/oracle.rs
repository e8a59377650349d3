//! The predicate oracle: one invocation decides True/False for one record.
//!
//! The trait is transport-agnostic. The HTTP client (with caching, retries,
//! and parallel dispatch) lives in the companion crate; this module provides
//! completion parsing plus two deterministic mock oracles used for tests and
//! desk-scale validation of the statistical guarantees.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{Predicate, Record};
use crate::math::mix64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("invoke_batch requires at least one record")]
    EmptyBatch,
    #[error("record {id} has no column {column:?}")]
    MissingColumn { id: u64, column: String },
    #[error("no label configured for record {id}")]
    MissingRule { id: u64 },
    #[error("completion for record {id} is undecidable: {text:?}")]
    Undecidable { id: u64, text: String },
    #[error("oracle transport failure: {0}")]
    Transport(String),
}

/// Where an outcome came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeSource {
    Llm,
    Cache,
    Mock,
    Fallback,
}

/// One decided record: a definite boolean plus token accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub id: u64,
    pub label: bool,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub source: OutcomeSource,
}

impl OracleOutcome {
    /// Cache hits replay stored results and must not be counted as new calls.
    pub fn is_fresh_call(&self) -> bool {
        self.source != OutcomeSource::Cache
    }
}

/// Extracts a boolean from a completion: case-insensitive scan for the first
/// standalone `true`/`false` token; surrounding whitespace and punctuation are
/// tolerated. Returns `None` when neither token occurs.
pub fn parse_label(completion: &str) -> Option<bool> {
    let mut token = String::new();
    let check = |tok: &mut String| -> Option<bool> {
        let res = match tok.as_str() {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        };
        tok.clear();
        res
    };
    for ch in completion.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                token.push(lc);
            }
        } else if !token.is_empty() {
            if let Some(label) = check(&mut token) {
                return Some(label);
            }
        }
    }
    check(&mut token)
}

/// The predicate oracle `M(record, predicate) -> bool`, evaluated in batches.
///
/// Implementations must return exactly one outcome per input record, sorted
/// by record id regardless of internal completion order.
pub trait Oracle {
    fn invoke_batch(
        &mut self,
        predicate: &Predicate,
        records: &[&Record],
    ) -> Result<Vec<OracleOutcome>, OracleError>;
}

fn sort_outcomes(mut outcomes: Vec<OracleOutcome>) -> Vec<OracleOutcome> {
    outcomes.sort_by_key(|o| o.id);
    outcomes
}

/// Mock oracle that reads its verdict from a ground-truth column. Each lookup
/// is counted as one simulated LLM call by the engine.
#[derive(Debug, Clone)]
pub struct ColumnOracle {
    column: String,
}

impl ColumnOracle {
    pub fn new(column: &str) -> Self {
        ColumnOracle { column: column.to_owned() }
    }

    /// The fixed label this oracle would emit for `record`.
    pub fn label_for(&self, record: &Record) -> Result<bool, OracleError> {
        let text = record.column(&self.column).ok_or_else(|| OracleError::MissingColumn {
            id: record.id,
            column: self.column.clone(),
        })?;
        parse_label(text).ok_or_else(|| OracleError::Undecidable {
            id: record.id,
            text: text.to_owned(),
        })
    }
}

impl Oracle for ColumnOracle {
    fn invoke_batch(
        &mut self,
        _predicate: &Predicate,
        records: &[&Record],
    ) -> Result<Vec<OracleOutcome>, OracleError> {
        if records.is_empty() {
            return Err(OracleError::EmptyBatch);
        }
        let mut out = Vec::with_capacity(records.len());
        for record in records {
            out.push(OracleOutcome {
                id: record.id,
                label: self.label_for(record)?,
                prompt_tokens: 0,
                completion_tokens: 0,
                source: OutcomeSource::Mock,
            });
        }
        Ok(sort_outcomes(out))
    }
}

/// Mock oracle whose answer for record `i` is a seeded Bernoulli draw with
/// the record's configured True-probability. A given `(seed, id)` pair always
/// produces the same answer, so one instance is a fixed labeling of the
/// population; independent redraws come from a different seed.
#[derive(Debug, Clone)]
pub struct BernoulliOracle {
    probs: BTreeMap<u64, f64>,
    seed: u64,
}

impl BernoulliOracle {
    pub fn new(probs: BTreeMap<u64, f64>, seed: u64) -> Self {
        BernoulliOracle { probs, seed }
    }

    /// The fixed label of this oracle's population realization for `id`.
    pub fn label_for(&self, id: u64) -> Result<bool, OracleError> {
        let p = *self.probs.get(&id).ok_or(OracleError::MissingRule { id })?;
        // 53-bit uniform in [0, 1) from the mixed (seed, id) pair.
        let u = (mix64(self.seed ^ mix64(id)) >> 11) as f64 / (1u64 << 53) as f64;
        Ok(u < p)
    }
}

impl Oracle for BernoulliOracle {
    fn invoke_batch(
        &mut self,
        _predicate: &Predicate,
        records: &[&Record],
    ) -> Result<Vec<OracleOutcome>, OracleError> {
        if records.is_empty() {
            return Err(OracleError::EmptyBatch);
        }
        let mut out = Vec::with_capacity(records.len());
        for record in records {
            out.push(OracleOutcome {
                id: record.id,
                label: self.label_for(record.id)?,
                prompt_tokens: 0,
                completion_tokens: 0,
                source: OutcomeSource::Mock,
            });
        }
        Ok(sort_outcomes(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Table;
    use alloc::vec;

    #[test]
    fn parse_label_fixtures() {
        assert_eq!(parse_label("True"), Some(true));
        assert_eq!(parse_label("false."), Some(false));
        assert_eq!(parse_label("The answer is True."), Some(true));
        assert_eq!(parse_label("  FALSE\n"), Some(false));
        assert_eq!(parse_label("True or False? True."), Some(true));
        assert_eq!(parse_label("untrue"), None);
        assert_eq!(parse_label("I cannot determine this."), None);
        assert_eq!(parse_label(""), None);
    }

    fn labeled_table() -> Table {
        let records = (0..5u64)
            .map(|i| {
                Record::new(i)
                    .with_column("text", "x")
                    .with_column("label", if i % 2 == 0 { "true" } else { "false" })
            })
            .collect();
        Table::new(vec!["text".into(), "label".into()], records).unwrap()
    }

    #[test]
    fn column_oracle_passthrough() {
        let table = labeled_table();
        let predicate = Predicate::new("{text}", None).unwrap();
        let mut oracle = ColumnOracle::new("label");
        let refs: Vec<&Record> = table.records().iter().collect();
        let outcomes = oracle.invoke_batch(&predicate, &refs).unwrap();
        assert_eq!(outcomes.len(), 5);
        for o in &outcomes {
            assert_eq!(o.label, o.id % 2 == 0);
            assert_eq!(o.source, OutcomeSource::Mock);
        }
    }

    #[test]
    fn column_oracle_missing_column_errors() {
        let table = labeled_table();
        let predicate = Predicate::new("{text}", None).unwrap();
        let mut oracle = ColumnOracle::new("nope");
        let refs: Vec<&Record> = table.records().iter().collect();
        assert!(matches!(
            oracle.invoke_batch(&predicate, &refs),
            Err(OracleError::MissingColumn { id: 0, .. })
        ));
    }

    #[test]
    fn outcomes_sorted_by_id() {
        let records = vec![
            Record::new(9).with_column("label", "true"),
            Record::new(1).with_column("label", "false"),
            Record::new(5).with_column("label", "true"),
        ];
        let table = Table::new(vec!["label".into()], records).unwrap();
        let predicate = Predicate::new("x", None).unwrap();
        let mut oracle = ColumnOracle::new("label");
        let refs: Vec<&Record> = table.records().iter().collect();
        let outcomes = oracle.invoke_batch(&predicate, &refs).unwrap();
        let ids: Vec<u64> = outcomes.iter().map(|o| o.id).collect();
        assert_eq!(ids, vec![1, 5, 9]);
    }

    #[test]
    fn empty_batch_errors() {
        let predicate = Predicate::new("x", None).unwrap();
        let mut oracle = ColumnOracle::new("label");
        assert_eq!(oracle.invoke_batch(&predicate, &[]), Err(OracleError::EmptyBatch));
    }

    #[test]
    fn bernoulli_oracle_is_deterministic_per_seed() {
        let probs: BTreeMap<u64, f64> = (0..100).map(|i| (i, 0.7)).collect();
        let a = BernoulliOracle::new(probs.clone(), 42);
        let b = BernoulliOracle::new(probs.clone(), 42);
        let c = BernoulliOracle::new(probs, 43);
        let la: Vec<bool> = (0..100).map(|i| a.label_for(i).unwrap()).collect();
        let lb: Vec<bool> = (0..100).map(|i| b.label_for(i).unwrap()).collect();
        let lc: Vec<bool> = (0..100).map(|i| c.label_for(i).unwrap()).collect();
        assert_eq!(la, lb);
        assert_ne!(la, lc, "different seeds should disagree somewhere");
    }

    #[test]
    fn bernoulli_rate_tracks_probability() {
        let n = 20_000u64;
        let probs: BTreeMap<u64, f64> = (0..n).map(|i| (i, 0.9)).collect();
        let oracle = BernoulliOracle::new(probs, 7);
        let trues = (0..n).filter(|&i| oracle.label_for(i).unwrap()).count();
        let rate = trues as f64 / n as f64;
        // 3 sigma around 0.9 at n = 20k is about +/- 0.0064.
        assert!((rate - 0.9).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn bernoulli_extremes_are_constant() {
        let mut probs = BTreeMap::new();
        for i in 0..50 {
            probs.insert(i, if i < 25 { 1.0 } else { 0.0 });
        }
        let oracle = BernoulliOracle::new(probs, 3);
        for i in 0..50 {
            assert_eq!(oracle.label_for(i).unwrap(), i < 25);
        }
    }
}
