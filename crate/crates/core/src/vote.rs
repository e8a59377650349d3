//! Label inference for unsampled cluster members.
//!
//! Two strategies over the oracle outcomes of a cluster sample:
//!
//! * uniform voting — every remaining tuple gets the sample's positive rate
//!   `|O+|/|O|` as its score;
//! * similarity voting — each remaining tuple gets a similarity-weighted
//!   convex combination of the sampled labels,
//!   `score(i) = Σ_j sim(i,j)·label_j / Σ_k sim(i,k)`.
//!
//! Either way the score is cut against thresholds `(lb, ub)`: `score >= ub`
//! labels positive, `score <= lb` labels negative, and the open interval is
//! undetermined (sent back for re-clustering). Boundary ties decide; the
//! closed comparisons at `ub`/`lb` are the normative semantics for both
//! strategies.

use alloc::collections::{BTreeMap, BTreeSet};
use serde::{Deserialize, Serialize};

use crate::oracle::OracleOutcome;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VoteError {
    #[error("vote requires at least one sampled outcome")]
    EmptyOutcomes,
    #[error("invalid thresholds: need 0 <= lb < ub <= 1, got lb={lb} ub={ub}")]
    InvalidThresholds { lb: f64, ub: f64 },
    #[error("sampled ids must be a subset of the cluster ids (id {id})")]
    SampleNotInCluster { id: u64 },
    #[error("outcomes must cover exactly the sampled ids (id {id})")]
    OutcomeMismatch { id: u64 },
    #[error("similarity must be nonnegative, got {value} for pair ({a}, {b})")]
    NegativeSimilarity { a: u64, b: u64, value: f64 },
    #[error("similarity normalizer is zero for tuple {id}")]
    ZeroNormalizer { id: u64 },
}

/// Vote-confidence cut points. Scores inside `(lb, ub)` are undetermined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub lb: f64,
    pub ub: f64,
}

impl Thresholds {
    pub fn new(lb: f64, ub: f64) -> Result<Self, VoteError> {
        let th = Thresholds { lb, ub };
        th.validate()?;
        Ok(th)
    }

    /// `ub = 1 − lb`, the default pairing.
    pub fn symmetric(lb: f64) -> Result<Self, VoteError> {
        Self::new(lb, 1.0 - lb)
    }

    pub fn validate(&self) -> Result<(), VoteError> {
        let ok = self.lb.is_finite()
            && self.ub.is_finite()
            && 0.0 <= self.lb
            && self.lb < self.ub
            && self.ub <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(VoteError::InvalidThresholds { lb: self.lb, ub: self.ub })
        }
    }

    fn cut(&self, score: f64) -> Decision {
        if score >= self.ub {
            Decision::Positive
        } else if score <= self.lb {
            Decision::Negative
        } else {
            Decision::Undetermined
        }
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { lb: 0.15, ub: 0.85 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Decision {
    Positive,
    Negative,
    Undetermined,
}

/// Outcome of voting over one cluster: the unsampled ids partitioned into
/// positives, negatives, and undetermined, plus each tuple's score.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VoteReport {
    pub positives: BTreeSet<u64>,
    pub negatives: BTreeSet<u64>,
    pub undetermined: BTreeSet<u64>,
    pub scores: BTreeMap<u64, f64>,
}

impl VoteReport {
    pub fn is_settled(&self) -> bool {
        self.undetermined.is_empty()
    }
}

fn check_inputs(
    outcomes: &[OracleOutcome],
    cluster_ids: &BTreeSet<u64>,
    sampled_ids: &BTreeSet<u64>,
    th: Thresholds,
) -> Result<(), VoteError> {
    th.validate()?;
    if outcomes.is_empty() {
        return Err(VoteError::EmptyOutcomes);
    }
    if let Some(&id) = sampled_ids.iter().find(|id| !cluster_ids.contains(id)) {
        return Err(VoteError::SampleNotInCluster { id });
    }
    if outcomes.len() != sampled_ids.len() {
        let id = outcomes
            .iter()
            .map(|o| o.id)
            .find(|id| !sampled_ids.contains(id))
            .unwrap_or(*sampled_ids.iter().next().unwrap());
        return Err(VoteError::OutcomeMismatch { id });
    }
    if let Some(o) = outcomes.iter().find(|o| !sampled_ids.contains(&o.id)) {
        return Err(VoteError::OutcomeMismatch { id: o.id });
    }
    Ok(())
}

/// Uniform voting: one sample-level score for every remaining tuple.
pub fn uni_vote(
    outcomes: &[OracleOutcome],
    cluster_ids: &BTreeSet<u64>,
    sampled_ids: &BTreeSet<u64>,
    th: Thresholds,
) -> Result<VoteReport, VoteError> {
    check_inputs(outcomes, cluster_ids, sampled_ids, th)?;
    let positives = outcomes.iter().filter(|o| o.label).count();
    let score = positives as f64 / outcomes.len() as f64;
    let decision = th.cut(score);

    let mut report = VoteReport::default();
    for &id in cluster_ids.difference(sampled_ids) {
        report.scores.insert(id, score);
        match decision {
            Decision::Positive => report.positives.insert(id),
            Decision::Negative => report.negatives.insert(id),
            Decision::Undetermined => report.undetermined.insert(id),
        };
    }
    Ok(report)
}

/// Similarity voting: per-tuple scores, each a convex combination of the
/// sampled labels weighted by normalized similarity. `sim(a, b)` must be
/// nonnegative and, summed over the sample, strictly positive for every
/// remaining tuple.
pub fn sim_vote(
    outcomes: &[OracleOutcome],
    cluster_ids: &BTreeSet<u64>,
    sampled_ids: &BTreeSet<u64>,
    th: Thresholds,
    sim: &dyn Fn(u64, u64) -> f64,
) -> Result<VoteReport, VoteError> {
    check_inputs(outcomes, cluster_ids, sampled_ids, th)?;
    let mut report = VoteReport::default();
    for &id in cluster_ids.difference(sampled_ids) {
        let mut weighted = 0.0f64;
        let mut norm = 0.0f64;
        for o in outcomes {
            let s = sim(id, o.id);
            if s < 0.0 || !s.is_finite() {
                return Err(VoteError::NegativeSimilarity { a: id, b: o.id, value: s });
            }
            norm += s;
            if o.label {
                weighted += s;
            }
        }
        if norm <= 0.0 {
            return Err(VoteError::ZeroNormalizer { id });
        }
        let score = weighted / norm;
        report.scores.insert(id, score);
        match th.cut(score) {
            Decision::Positive => report.positives.insert(id),
            Decision::Negative => report.negatives.insert(id),
            Decision::Undetermined => report.undetermined.insert(id),
        };
    }
    Ok(report)
}

/// Default similarity between embedded records: `1 / (1 + d)` where `d` is
/// the configured clustering distance. Strictly positive, maximal at `d = 0`.
pub fn similarity_from_distance(d: f64) -> f64 {
    1.0 / (1.0 + d)
}

/// Largest normalized weight a sample carries for any remaining tuple,
/// expressed in units of `1/k` (the `v` with `max_i w_i <= v/k`). Used to
/// check the planner's weight-skew assumption after the fact.
pub fn max_weight_skew(
    remaining: &BTreeSet<u64>,
    sampled: &BTreeSet<u64>,
    sim: &dyn Fn(u64, u64) -> f64,
) -> f64 {
    let k = sampled.len() as f64;
    let mut worst = 0.0f64;
    for &id in remaining {
        let mut norm = 0.0;
        let mut max_s = 0.0f64;
        for &s_id in sampled {
            let s = sim(id, s_id);
            norm += s;
            if s > max_s {
                max_s = s;
            }
        }
        if norm > 0.0 {
            let v = max_s / norm * k;
            if v > worst {
                worst = v;
            }
        }
    }
    worst
}
