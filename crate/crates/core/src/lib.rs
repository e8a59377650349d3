//! Cluster-sample-vote engine for LLM-backed semantic filters.
//!
//! A semantic filter selects the rows of a table that satisfy a natural-language
//! predicate, with the judgment delegated to an LLM oracle. Invoking the oracle
//! once per row is linear in the table size; this crate amortizes that cost by
//! clustering row embeddings, invoking the oracle on a small sample per cluster,
//! and inferring the remaining labels by voting. Votes land only when the sample
//! consensus clears configurable confidence thresholds; everything else is pooled,
//! re-clustered, and ultimately handed back to the oracle, so the result is total
//! and the error of every voted label is bounded by finite-population Bernstein
//! concentration.
//!
//! The crate is `no_std`-compatible (`alloc` required): it holds the data model,
//! clustering, voting, the sample-size planner, the filter engine, and the
//! evaluation harness. File formats, HTTP clients, and the CLI live in the
//! companion `semfilter` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod bm25;
pub mod cluster;
pub mod data;
pub mod embed;
pub mod engine;
pub mod evalsim;
pub mod math;
pub mod oracle;
pub mod planner;
pub mod vote;

pub use data::{Predicate, Record, Table};
pub use embed::EmbeddingSet;
pub use engine::{FilterConfig, FilterResult, Provenance, Strategy};
pub use oracle::{Oracle, OracleOutcome, OutcomeSource};
pub use vote::{Thresholds, VoteReport};
