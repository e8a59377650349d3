//! The semantic filter engine.
//!
//! One run: partition the table's embeddings with seeded k-means, sample each
//! cluster, invoke the oracle on the sample, and vote the remaining members.
//! Tuples whose vote lands in the undetermined band are pooled across the
//! round, re-clustered, and retried; once the depth cap is reached (or the
//! pool is no larger than the sampling floor) the engine falls back to direct
//! oracle invocation, so every input id always receives exactly one label.
//!
//! All randomness is pre-derived: the per-cluster sampling stream is
//! `derive_seed(seed, cluster_index, depth)` and the per-depth clustering
//! stream is derived from the same master seed, so results are independent of
//! cluster processing order and identical across runs.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bm25::Bm25Corpus;
use crate::cluster::{kmeans, ClusterError, DistanceSpec, HybridContext, DEFAULT_MAX_ITERS};
use crate::data::{DataError, Predicate, Record, Table};
use crate::embed::{fused_text, EmbedError, EmbeddingSet};
use crate::math::{ceil, derive_seed};
use crate::oracle::{Oracle, OracleError, OracleOutcome};
use crate::vote::{
    max_weight_skew, sim_vote, similarity_from_distance, uni_vote, Thresholds, VoteError,
    VoteReport,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Vote(#[from] VoteError),
    /// Oracle failure mid-run, with how far the run got.
    #[error("oracle failure after labeling {labeled} records: {error}")]
    Oracle {
        error: OracleError,
        labeled: usize,
        stats: FilterStats,
    },
}

/// Which voting strategy infers unsampled labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Uni,
    Sim,
}

/// Everything that tunes one filter run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Cluster count for the initial partition and every re-partition.
    pub k: usize,
    /// Sample ratio per cluster, in (0, 1].
    pub xi: f64,
    pub thresholds: Thresholds,
    pub distance: DistanceSpec,
    /// Absolute floor on per-cluster sample size.
    pub min_sample: usize,
    /// Re-cluster depth cap; the initial partition is depth 0.
    pub max_depth: u32,
    pub seed: u64,
    pub strategy: Strategy,
    /// Weight-skew constant `v` checked after similarity voting.
    pub weight_skew: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            k: 4,
            xi: 0.005,
            thresholds: Thresholds::default(),
            distance: DistanceSpec::default(),
            min_sample: 101,
            max_depth: 3,
            seed: 0,
            strategy: Strategy::Uni,
            weight_skew: 2.0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.k == 0 {
            return Err(EngineError::InvalidConfig("k must be at least 1".into()));
        }
        if !(self.xi > 0.0 && self.xi <= 1.0) {
            return Err(EngineError::InvalidConfig(alloc::format!(
                "xi must be in (0, 1], got {}",
                self.xi
            )));
        }
        if self.min_sample == 0 {
            return Err(EngineError::InvalidConfig("min_sample must be at least 1".into()));
        }
        if self.weight_skew < 1.0 {
            return Err(EngineError::InvalidConfig("weight_skew must be >= 1".into()));
        }
        self.thresholds.validate().map_err(EngineError::Vote)?;
        self.distance.validate().map_err(EngineError::Cluster)?;
        Ok(())
    }
}

/// How a record's final label was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Sampled (or scanned) and decided by a direct oracle call.
    Oracle,
    /// Inferred from the cluster sample by voting.
    Vote,
    /// Decided by the exhaustive oracle pass at the depth cap.
    Fallback,
}

/// Cost counters for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterStats {
    /// Prompts issued to the oracle (cache hits excluded).
    pub llm_calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub recluster_rounds: u32,
    /// Filled by the caller; the engine itself does not read a clock.
    pub wall_time_ms: u64,
    /// Tuples whose similarity weights exceeded `weight_skew / k`.
    pub weight_skew_violations: u64,
}

/// What happened to one cluster node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceDecision {
    VotedPositive,
    VotedNegative,
    /// Per-tuple strategies may settle only part of a cluster.
    Mixed,
    Undetermined,
    /// Sample covered the whole cluster; no vote needed.
    Direct,
}

/// Diagnostic record of one processed cluster node.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTrace {
    pub depth: u32,
    pub cluster: usize,
    pub members: Vec<u64>,
    pub sampled: Vec<u64>,
    pub sample_positives: u32,
    /// Sample positive rate `|O+|/|O|`.
    pub sample_score: f64,
    pub decision: TraceDecision,
}

/// Total labeling of the input table plus cost counters and per-cluster
/// diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    pub labels: BTreeMap<u64, bool>,
    pub provenance: BTreeMap<u64, Provenance>,
    pub stats: FilterStats,
    pub trace: Vec<ClusterTrace>,
}

impl FilterResult {
    fn empty() -> Self {
        FilterResult {
            labels: BTreeMap::new(),
            provenance: BTreeMap::new(),
            stats: FilterStats::default(),
            trace: Vec::new(),
        }
    }

    /// Ids labeled true — the filter's output set.
    pub fn positives(&self) -> BTreeSet<u64> {
        self.labels.iter().filter(|(_, &v)| v).map(|(&id, _)| id).collect()
    }
}

/// Per-cluster sample size: `min(|ids|, max(ceil(xi·|ids|), min_sample))`,
/// drawn by simple random sampling without replacement from a seeded stream.
/// When the size reaches the cluster, the whole cluster is returned.
pub fn sample_cluster(
    ids: &BTreeSet<u64>,
    xi: f64,
    min_sample: usize,
    seed: u64,
) -> BTreeSet<u64> {
    let n = ids.len();
    if n == 0 {
        return BTreeSet::new();
    }
    let by_ratio = ceil(xi * n as f64) as usize;
    let s = by_ratio.max(min_sample).min(n);
    if s == n {
        return ids.clone();
    }
    let members: Vec<u64> = ids.iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, n, s)
        .into_iter()
        .map(|i| members[i])
        .collect()
}

struct RunState {
    labels: BTreeMap<u64, bool>,
    provenance: BTreeMap<u64, Provenance>,
    stats: FilterStats,
    trace: Vec<ClusterTrace>,
}

impl RunState {
    fn absorb_outcomes(&mut self, outcomes: &[OracleOutcome], provenance: Provenance) {
        for o in outcomes {
            if o.is_fresh_call() {
                self.stats.llm_calls += 1;
            }
            self.stats.prompt_tokens += o.prompt_tokens;
            self.stats.completion_tokens += o.completion_tokens;
            self.labels.insert(o.id, o.label);
            self.provenance.insert(o.id, provenance);
        }
    }

    fn oracle_error(self, error: OracleError) -> EngineError {
        EngineError::Oracle { error, labeled: self.labels.len(), stats: self.stats }
    }
}

fn record_refs<'t>(table: &'t Table, ids: &BTreeSet<u64>) -> Vec<&'t Record> {
    ids.iter().map(|&id| table.get(id).expect("ids come from the table")).collect()
}

/// Runs the cluster-sample-vote filter end to end. See the module docs for
/// the round structure; `reference_filter` is the linear-scan baseline.
pub fn semantic_filter(
    table: &Table,
    embeddings: &EmbeddingSet,
    predicate: &Predicate,
    cfg: &FilterConfig,
    oracle: &mut dyn Oracle,
) -> Result<FilterResult, EngineError> {
    cfg.validate()?;
    predicate.validate_against(table)?;
    embeddings.covers(table.ids())?;
    if table.is_empty() {
        return Ok(FilterResult::empty());
    }

    // Lexical corpus over the fused predicate columns, only when the distance
    // actually mixes in BM25.
    let corpus: Option<Bm25Corpus> = if cfg.distance.pure_euclidean() {
        None
    } else {
        let texts: Vec<(u64, String)> = table
            .records()
            .iter()
            .map(|r| (r.id, fused_text(r, predicate.referenced_columns())))
            .collect();
        Some(
            Bm25Corpus::build(texts.iter().map(|(id, t)| (*id, t.as_str())))
                .map_err(|_| ClusterError::MissingCorpus)?,
        )
    };

    let mut state = RunState {
        labels: BTreeMap::new(),
        provenance: BTreeMap::new(),
        stats: FilterStats::default(),
        trace: Vec::new(),
    };
    let mut current: BTreeSet<u64> = table.id_set();
    let mut depth: u32 = 0;

    loop {
        let partition = kmeans(
            &current,
            embeddings,
            cfg.k,
            cfg.distance,
            corpus.as_ref(),
            derive_seed(cfg.seed, u64::MAX, depth as u64),
            DEFAULT_MAX_ITERS,
        )?;

        let mut pool: BTreeSet<u64> = BTreeSet::new();
        for cluster in &partition.clusters {
            let cluster_ids: BTreeSet<u64> = cluster.members.iter().copied().collect();
            let sample_seed = derive_seed(cfg.seed, cluster.index as u64, depth as u64);
            let sampled = sample_cluster(&cluster_ids, cfg.xi, cfg.min_sample, sample_seed);

            let refs = record_refs(table, &sampled);
            let outcomes = match oracle.invoke_batch(predicate, &refs) {
                Ok(o) => o,
                Err(e) => return Err(state.oracle_error(e)),
            };
            state.absorb_outcomes(&outcomes, Provenance::Oracle);
            let positives = outcomes.iter().filter(|o| o.label).count() as u32;
            let score = positives as f64 / outcomes.len() as f64;

            if sampled.len() == cluster_ids.len() {
                state.trace.push(ClusterTrace {
                    depth,
                    cluster: cluster.index,
                    members: cluster.members.clone(),
                    sampled: sampled.iter().copied().collect(),
                    sample_positives: positives,
                    sample_score: score,
                    decision: TraceDecision::Direct,
                });
                continue;
            }

            let report = run_vote(
                cfg,
                &outcomes,
                &cluster_ids,
                &sampled,
                embeddings,
                corpus.as_ref(),
                &mut state.stats,
            )?;

            for &id in &report.positives {
                state.labels.insert(id, true);
                state.provenance.insert(id, Provenance::Vote);
            }
            for &id in &report.negatives {
                state.labels.insert(id, false);
                state.provenance.insert(id, Provenance::Vote);
            }
            pool.extend(report.undetermined.iter().copied());

            let decision = match (
                report.positives.is_empty() && report.negatives.is_empty(),
                report.undetermined.is_empty(),
            ) {
                (true, false) => TraceDecision::Undetermined,
                (false, true) if report.negatives.is_empty() => TraceDecision::VotedPositive,
                (false, true) if report.positives.is_empty() => TraceDecision::VotedNegative,
                _ => TraceDecision::Mixed,
            };
            state.trace.push(ClusterTrace {
                depth,
                cluster: cluster.index,
                members: cluster.members.clone(),
                sampled: sampled.iter().copied().collect(),
                sample_positives: positives,
                sample_score: score,
                decision,
            });
        }

        if pool.is_empty() {
            break;
        }
        // Re-cluster only while the pool is deeper than the depth cap allows
        // and larger than a single sampling floor (otherwise sampling would
        // cover it anyway, so the direct pass is never more expensive).
        if depth >= cfg.max_depth || pool.len() <= cfg.min_sample {
            let refs = record_refs(table, &pool);
            let outcomes = match oracle.invoke_batch(predicate, &refs) {
                Ok(o) => o,
                Err(e) => return Err(state.oracle_error(e)),
            };
            state.absorb_outcomes(&outcomes, Provenance::Fallback);
            break;
        }
        current = pool;
        depth += 1;
        state.stats.recluster_rounds += 1;
    }

    debug_assert_eq!(state.labels.len(), table.len());
    Ok(FilterResult {
        labels: state.labels,
        provenance: state.provenance,
        stats: state.stats,
        trace: state.trace,
    })
}

fn run_vote(
    cfg: &FilterConfig,
    outcomes: &[OracleOutcome],
    cluster_ids: &BTreeSet<u64>,
    sampled: &BTreeSet<u64>,
    embeddings: &EmbeddingSet,
    corpus: Option<&Bm25Corpus>,
    stats: &mut FilterStats,
) -> Result<VoteReport, EngineError> {
    match cfg.strategy {
        Strategy::Uni => Ok(uni_vote(outcomes, cluster_ids, sampled, cfg.thresholds)?),
        Strategy::Sim => {
            let remaining: Vec<u64> = cluster_ids.difference(sampled).copied().collect();
            let mut pairs = Vec::with_capacity(remaining.len() * sampled.len());
            for &r in &remaining {
                for &s in sampled {
                    pairs.push((r, s));
                }
            }
            let ctx = HybridContext::over_pairs(&pairs, embeddings, corpus, cfg.distance)?;
            let sim = |a: u64, b: u64| similarity_from_distance(ctx.distance(a, b));
            let report = sim_vote(outcomes, cluster_ids, sampled, cfg.thresholds, &sim)?;

            // Post-hoc check of the planner's weight-skew assumption.
            let remaining_set: BTreeSet<u64> = remaining.iter().copied().collect();
            let v = max_weight_skew(&remaining_set, sampled, &sim);
            if v > cfg.weight_skew {
                stats.weight_skew_violations += 1;
            }
            Ok(report)
        }
    }
}

/// The linear-scan baseline: one oracle call per record. Also the primitive
/// the engine's fallback path reduces to.
pub fn reference_filter(
    table: &Table,
    predicate: &Predicate,
    oracle: &mut dyn Oracle,
) -> Result<FilterResult, EngineError> {
    predicate.validate_against(table)?;
    if table.is_empty() {
        return Ok(FilterResult::empty());
    }
    let mut state = RunState {
        labels: BTreeMap::new(),
        provenance: BTreeMap::new(),
        stats: FilterStats::default(),
        trace: Vec::new(),
    };
    let ids = table.id_set();
    let refs = record_refs(table, &ids);
    let outcomes = match oracle.invoke_batch(predicate, &refs) {
        Ok(o) => o,
        Err(e) => return Err(state.oracle_error(e)),
    };
    state.absorb_outcomes(&outcomes, Provenance::Oracle);
    Ok(FilterResult {
        labels: state.labels,
        provenance: state.provenance,
        stats: state.stats,
        trace: Vec::new(),
    })
}
