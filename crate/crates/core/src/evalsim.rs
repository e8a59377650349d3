//! Metrics, synthetic workloads, and Monte Carlo validation of the
//! statistical guarantees.
//!
//! The harness generates tables with known cluster structure and per-record
//! oracle True-probabilities, runs the filter under the stochastic mock
//! oracle, and compares the observed voting error and sample-mean tails
//! against the analytic ceilings. Disagreement is measured against fresh
//! oracle redraws rather than the fixed hidden labels: the guarantee bounds
//! disagreement with what the oracle would say, and under a stochastic oracle
//! that is a new draw.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Predicate, Record, Table};
use crate::embed::EmbeddingSet;
use crate::engine::{semantic_filter, EngineError, FilterConfig, FilterStats, Provenance};
use crate::math::{cos, derive_seed, ln, sqrt};
use crate::oracle::BernoulliOracle;
use crate::planner::{bernstein_tail, error_ceiling, failure_probability, PlannerParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("predicted and truth id sets differ at id {id}")]
    IdMismatch { id: u64 },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Confusion-matrix metrics, plus the run's cost counters when available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<FilterStats>,
}

impl Metrics {
    pub fn with_cost(mut self, stats: FilterStats) -> Self {
        self.cost = Some(stats);
        self
    }
}

/// Standard confusion-matrix metrics over two labelings of the same id set.
/// Empty inputs yield accuracy 1 (no mistakes) and zero P/R/F1.
pub fn compute_metrics(
    predicted: &BTreeMap<u64, bool>,
    truth: &BTreeMap<u64, bool>,
) -> Result<Metrics, EvalError> {
    if let Some(&id) = predicted.keys().find(|id| !truth.contains_key(id)) {
        return Err(EvalError::IdMismatch { id });
    }
    if let Some(&id) = truth.keys().find(|id| !predicted.contains_key(id)) {
        return Err(EvalError::IdMismatch { id });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (id, &pred) in predicted {
        match (pred, truth[id]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let total = (tp + fp + tn + fn_) as f64;
    let accuracy = if total == 0.0 { 1.0 } else { (tp + tn) as f64 / total };
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics { accuracy, precision, recall, f1, tp, fp, tn, fn_, cost: None })
}

/// One synthetic cluster: a Gaussian blob of `size` records whose oracle
/// answers True with probability `purity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub size: usize,
    pub purity: f64,
    pub centroid: Vec<f32>,
    pub spread: f32,
}

/// Recipe for a synthetic workload with known structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub dim: usize,
    pub seed: u64,
    pub clusters: Vec<ClusterSpec>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.dim == 0 {
            return Err(EvalError::InvalidSpec("dim must be positive".into()));
        }
        let total: usize = self.clusters.iter().map(|c| c.size).sum();
        if total != self.n {
            return Err(EvalError::InvalidSpec(alloc::format!(
                "cluster sizes sum to {total}, expected n = {}",
                self.n
            )));
        }
        for (i, c) in self.clusters.iter().enumerate() {
            if !(0.0..=1.0).contains(&c.purity) {
                return Err(EvalError::InvalidSpec(alloc::format!(
                    "cluster {i} purity {} outside [0, 1]",
                    c.purity
                )));
            }
            if c.centroid.len() != self.dim {
                return Err(EvalError::InvalidSpec(alloc::format!(
                    "cluster {i} centroid has dim {}, expected {}",
                    c.centroid.len(),
                    self.dim
                )));
            }
        }
        Ok(())
    }
}

/// A generated workload: the table (with `text` and ground-truth `label`
/// columns), its embeddings, the fixed hidden labels, and each record's
/// oracle True-probability.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub table: Table,
    pub embeddings: EmbeddingSet,
    pub truth: BTreeMap<u64, bool>,
    pub true_prob: BTreeMap<u64, f64>,
}

impl Synthetic {
    /// A stochastic oracle over this population, fixed by `seed`.
    pub fn bernoulli_oracle(&self, seed: u64) -> BernoulliOracle {
        BernoulliOracle::new(self.true_prob.clone(), seed)
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; clamping u1 away from zero avoids ln(0).
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen::<f64>();
    sqrt(-2.0 * ln(u1)) * cos(core::f64::consts::TAU * u2)
}

/// Generates the synthetic workload: per cluster, embeddings are
/// `centroid + spread · N(0, I)` and hidden labels are Bernoulli(purity),
/// all from one ChaCha stream seeded by `spec.seed`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Synthetic, EvalError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut embeddings =
        EmbeddingSet::new(spec.dim).map_err(|e| EvalError::Engine(EngineError::Embed(e)))?;
    let mut records = Vec::with_capacity(spec.n);
    let mut truth = BTreeMap::new();
    let mut true_prob = BTreeMap::new();
    let mut id = 0u64;
    for (ci, cluster) in spec.clusters.iter().enumerate() {
        for _ in 0..cluster.size {
            let vector: Vec<f32> = cluster
                .centroid
                .iter()
                .map(|&c| c + cluster.spread * standard_normal(&mut rng) as f32)
                .collect();
            embeddings
                .insert(id, vector)
                .map_err(|e| EvalError::Engine(EngineError::Embed(e)))?;
            let label = rng.gen::<f64>() < cluster.purity;
            truth.insert(id, label);
            true_prob.insert(id, cluster.purity);
            records.push(
                Record::new(id)
                    .with_column("text", &alloc::format!("topic{ci} row {id}"))
                    .with_column("label", if label { "true" } else { "false" }),
            );
            id += 1;
        }
    }
    let table = Table::new(alloc::vec!["text".into(), "label".into()], records)
        .map_err(|e| EvalError::Engine(EngineError::Data(e)))?;
    Ok(Synthetic { table, embeddings, truth, true_prob })
}

/// Observed vs analytic behavior of the vote guarantee over seeded trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub trials: u32,
    pub epsilon: f64,
    /// `max(lb + ε, 1 − (ub − ε))`.
    pub ceiling: f64,
    /// `2·lⁿ` for the smallest configured cluster.
    pub failure_bound: f64,
    /// Trials in which at least one tuple was labeled by vote.
    pub voted_trials: u32,
    /// Mean per-tuple disagreement between voted labels and fresh redraws.
    pub mean_disagreement: f64,
    pub max_disagreement: f64,
    /// Fraction of voted trials whose disagreement exceeded the ceiling.
    pub breach_fraction: f64,
    /// Sample-mean tail `|μ̂ − μ| ≥ ε`: observed frequency over all sampled
    /// cluster nodes, and the mean analytic Bernstein bound for them.
    pub tail_samples: u32,
    pub tail_empirical: f64,
    pub tail_analytic_mean: f64,
    pub mean_llm_calls: f64,
}

/// Runs `semantic_filter` under the Bernoulli mock oracle across seeded
/// trials and reports vote disagreement, ceiling breaches, and sample-mean
/// tail frequencies against their analytic bounds.
pub fn validate_bound(
    spec: &SyntheticSpec,
    cfg: &FilterConfig,
    params: &PlannerParams,
    trials: u32,
) -> Result<BoundReport, EvalError> {
    let synthetic = gen_synthetic(spec)?;
    let predicate = Predicate::new("{text}", None).expect("static template");
    let eps = params.epsilon;
    let min_cluster = spec.clusters.iter().map(|c| c.size).min().unwrap_or(0) as u64;

    let mut voted_trials = 0u32;
    let mut disagreement_sum = 0.0f64;
    let mut disagreement_max = 0.0f64;
    let mut breaches = 0u32;
    let mut tail_samples = 0u32;
    let mut tail_events = 0u32;
    let mut tail_bound_sum = 0.0f64;
    let mut calls_sum = 0.0f64;

    for trial in 0..trials {
        let mut oracle = synthetic.bernoulli_oracle(derive_seed(cfg.seed, trial as u64, 1));
        let redraw = synthetic.bernoulli_oracle(derive_seed(cfg.seed, trial as u64, 2));
        let trial_cfg = FilterConfig {
            seed: derive_seed(cfg.seed, trial as u64, 3),
            ..cfg.clone()
        };
        let result =
            semantic_filter(&synthetic.table, &synthetic.embeddings, &predicate, &trial_cfg, &mut oracle)?;
        calls_sum += result.stats.llm_calls as f64;

        let voted: Vec<u64> = result
            .provenance
            .iter()
            .filter(|(_, &p)| p == Provenance::Vote)
            .map(|(&id, _)| id)
            .collect();
        if !voted.is_empty() {
            voted_trials += 1;
            let mut disagreements = 0usize;
            for &id in &voted {
                let fresh = redraw.label_for(id).expect("synthetic ids have probabilities");
                if fresh != result.labels[&id] {
                    disagreements += 1;
                }
            }
            let rate = disagreements as f64 / voted.len() as f64;
            disagreement_sum += rate;
            if rate > disagreement_max {
                disagreement_max = rate;
            }
            if rate > error_ceiling(cfg.thresholds, eps) {
                breaches += 1;
            }
        }

        // Sample-mean concentration: compare each sampled cluster node's
        // sample mean against the exact population mean under this trial's
        // oracle realization.
        for trace in &result.trace {
            let k = trace.sampled.len();
            let n = trace.members.len();
            if k == 0 || k >= n {
                continue;
            }
            let mu_hat = trace.sample_score;
            let mut pop_true = 0usize;
            for &id in &trace.members {
                if oracle.label_for(id).expect("synthetic id") {
                    pop_true += 1;
                }
            }
            let mu = pop_true as f64 / n as f64;
            tail_samples += 1;
            if (mu_hat - mu).abs() >= eps {
                tail_events += 1;
            }
            // Sample variance of binary draws with the k−1 denominator.
            let sigma_sq = if k > 1 {
                mu_hat * (1.0 - mu_hat) * k as f64 / (k as f64 - 1.0)
            } else {
                0.25
            };
            tail_bound_sum +=
                bernstein_tail(k as u64, n as u64, eps, sigma_sq, params.r_bound)
                    .expect("1 <= k < n checked above");
        }
    }

    Ok(BoundReport {
        trials,
        epsilon: eps,
        ceiling: error_ceiling(cfg.thresholds, eps),
        failure_bound: failure_probability(params.failure_base, min_cluster),
        voted_trials,
        mean_disagreement: if voted_trials > 0 {
            disagreement_sum / voted_trials as f64
        } else {
            0.0
        },
        max_disagreement: disagreement_max,
        breach_fraction: if voted_trials > 0 {
            breaches as f64 / voted_trials as f64
        } else {
            0.0
        },
        tail_samples,
        tail_empirical: if tail_samples > 0 {
            tail_events as f64 / tail_samples as f64
        } else {
            0.0
        },
        tail_analytic_mean: if tail_samples > 0 {
            tail_bound_sum / tail_samples as f64
        } else {
            0.0
        },
        mean_llm_calls: if trials > 0 { calls_sum / trials as f64 } else { 0.0 },
    })
}

/// Monte Carlo frequency of `|μ̂ − μ| ≥ ε` when drawing `k` of `n` binary
/// values (`positives` ones) without replacement, over seeded resamples.
/// This is the independent check of the Bernstein tail bound.
pub fn resample_tail_frequency(
    n: usize,
    positives: usize,
    k: usize,
    epsilon: f64,
    resamples: u32,
    seed: u64,
) -> f64 {
    assert!(positives <= n && k >= 1 && k <= n);
    let mu = positives as f64 / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = 0u32;
    for _ in 0..resamples {
        let hits = rand::seq::index::sample(&mut rng, n, k)
            .into_iter()
            .filter(|&i| i < positives)
            .count();
        let mu_hat = hits as f64 / k as f64;
        if (mu_hat - mu).abs() >= epsilon {
            events += 1;
        }
    }
    events as f64 / resamples as f64
}
