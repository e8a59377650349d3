//! Seeded k-means over record embeddings, under pure Euclidean distance or a
//! hybrid Euclidean/BM25 mix.
//!
//! The hybrid distance is `d = λ·l2n + (1−λ)·(1 − simn)` where `l2n` is the
//! Euclidean distance scaled by the largest distance observed in the batch and
//! `simn` is the symmetrized BM25 score min-max normalized over the batch.
//! Both components are scale-free, so for `λ = 1` k-means runs directly on raw
//! Euclidean geometry with mean centroids. For `λ < 1` there is no vector-space
//! mean, so clusters are represented by medoids (the member minimizing the
//! summed hybrid distance) and all pairwise distances are precomputed.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bm25::Bm25Corpus;
use crate::embed::EmbeddingSet;
use crate::math::sqrt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("cannot cluster an empty id set")]
    EmptyInput,
    #[error("lambda must be in [0, 1], got {0}")]
    InvalidLambda(f64),
    #[error("no embedding stored for record {id}")]
    MissingEmbedding { id: u64 },
    #[error("record {id} is not in the lexical corpus")]
    MissingDocument { id: u64 },
    #[error("hybrid distance with lambda < 1 requires a lexical corpus")]
    MissingCorpus,
}

/// Mixing weights for the clustering distance. `lambda = 1` is pure Euclidean;
/// smaller values blend in `1 − lambda` worth of BM25 lexical dissimilarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceSpec {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_k1")]
    pub bm25_k1: f64,
    #[serde(default = "default_b")]
    pub bm25_b: f64,
}

fn default_lambda() -> f64 {
    1.0
}
fn default_k1() -> f64 {
    1.2
}
fn default_b() -> f64 {
    0.75
}

impl Default for DistanceSpec {
    fn default() -> Self {
        DistanceSpec { lambda: 1.0, bm25_k1: 1.2, bm25_b: 0.75 }
    }
}

impl DistanceSpec {
    pub fn pure_euclidean(&self) -> bool {
        self.lambda >= 1.0
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        if !(0.0..=1.0).contains(&self.lambda) || !self.lambda.is_finite() {
            return Err(ClusterError::InvalidLambda(self.lambda));
        }
        Ok(())
    }
}

/// Squared Euclidean distance. Panics on unequal dimensions.
pub fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len(), "dimension mismatch");
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let d = x as f64 - y as f64;
        acc += d * d;
    }
    acc
}

/// Euclidean distance. Panics on unequal dimensions.
pub fn l2_distance(a: &[f32], b: &[f32]) -> f64 {
    sqrt(squared_l2(a, b))
}

/// Combines pre-normalized components into the hybrid distance:
/// `λ·l2_norm + (1−λ)·(1 − lex_sim_norm)`.
pub fn hybrid_combine(lambda: f64, l2_norm: f64, lex_sim_norm: f64) -> f64 {
    lambda * l2_norm + (1.0 - lambda) * (1.0 - lex_sim_norm)
}

/// Normalization context for hybrid distances over a fixed batch of pairs.
///
/// The Euclidean component is scaled by the largest distance observed in the
/// batch (zero is always the natural minimum of a metric, so anchoring there
/// keeps `d(a,a) = 0` even when the batch contains no self-pair). The BM25
/// component is min-max normalized over the batch and clamped to `[0, 1]`.
#[derive(Debug)]
pub struct HybridContext<'a> {
    emb: &'a EmbeddingSet,
    lex: Option<&'a Bm25Corpus>,
    spec: DistanceSpec,
    l2_max: f64,
    sim_lo: f64,
    sim_hi: f64,
}

impl<'a> HybridContext<'a> {
    /// Context normalized over all unordered pairs of `ids`.
    pub fn over_id_set(
        ids: &BTreeSet<u64>,
        emb: &'a EmbeddingSet,
        lex: Option<&'a Bm25Corpus>,
        spec: DistanceSpec,
    ) -> Result<Self, ClusterError> {
        let v: Vec<u64> = ids.iter().copied().collect();
        let mut pairs = Vec::new();
        for i in 0..v.len() {
            for j in (i + 1)..v.len() {
                pairs.push((v[i], v[j]));
            }
        }
        Self::over_pairs(&pairs, emb, lex, spec)
    }

    /// Context normalized over an explicit batch of pairs. Self-pairs are
    /// skipped when computing the normalization range.
    pub fn over_pairs(
        pairs: &[(u64, u64)],
        emb: &'a EmbeddingSet,
        lex: Option<&'a Bm25Corpus>,
        spec: DistanceSpec,
    ) -> Result<Self, ClusterError> {
        spec.validate()?;
        let lex = if spec.pure_euclidean() {
            None
        } else {
            Some(lex.ok_or(ClusterError::MissingCorpus)?)
        };
        let mut l2_max = 0.0f64;
        let mut sim_lo = f64::INFINITY;
        let mut sim_hi = f64::NEG_INFINITY;
        for &(a, b) in pairs {
            let va = emb.get(a).ok_or(ClusterError::MissingEmbedding { id: a })?;
            let vb = emb.get(b).ok_or(ClusterError::MissingEmbedding { id: b })?;
            if a == b {
                continue;
            }
            let d = l2_distance(va, vb);
            if d > l2_max {
                l2_max = d;
            }
            if let Some(corpus) = lex {
                let s = corpus
                    .symmetric_score(a, b, spec.bm25_k1, spec.bm25_b)
                    .map_err(|_| ClusterError::MissingDocument { id: a })?;
                if s < sim_lo {
                    sim_lo = s;
                }
                if s > sim_hi {
                    sim_hi = s;
                }
            }
        }
        Ok(HybridContext { emb, lex, spec, l2_max, sim_lo, sim_hi })
    }

    /// Hybrid distance between two records of the context's universe.
    ///
    /// Symmetric, `d(a,a) = 0`, and within `[0, 1]` after normalization.
    /// Panics if an id was not covered by the constructor's pair batch
    /// universe (constructors validate every id they see).
    pub fn distance(&self, a: u64, b: u64) -> f64 {
        if a == b {
            return 0.0;
        }
        let va = self.emb.get(a).expect("id validated at construction");
        let vb = self.emb.get(b).expect("id validated at construction");
        let raw = l2_distance(va, vb);
        let l2n = if self.l2_max > 0.0 { raw / self.l2_max } else { 0.0 };
        if self.spec.pure_euclidean() {
            return l2n;
        }
        let corpus = self.lex.expect("corpus checked at construction");
        let s = corpus
            .symmetric_score(a, b, self.spec.bm25_k1, self.spec.bm25_b)
            .expect("id validated at construction");
        let simn = if self.sim_hi > self.sim_lo {
            ((s - self.sim_lo) / (self.sim_hi - self.sim_lo)).clamp(0.0, 1.0)
        } else {
            1.0
        };
        hybrid_combine(self.spec.lambda, l2n, simn)
    }
}

/// One cluster of a [`Partition`]. `centroid` is set on the Euclidean path,
/// `medoid` on the hybrid path; singleton fallbacks set both.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub index: usize,
    pub members: Vec<u64>,
    pub centroid: Option<Vec<f32>>,
    pub medoid: Option<u64>,
}

/// A disjoint cover of the input id set.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub clusters: Vec<Cluster>,
    pub assignment: BTreeMap<u64, usize>,
    /// Final sum of within-cluster assignment costs (squared Euclidean on the
    /// centroid path, hybrid distance on the medoid path).
    pub objective: f64,
    pub iterations: usize,
}

impl Partition {
    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }
}

pub const DEFAULT_MAX_ITERS: usize = 100;

/// Seeded k-means over `ids`.
///
/// `|ids| <= k` degenerates to one singleton cluster per id. Otherwise
/// centers are seeded with k-means++ driven by a ChaCha stream from `seed`
/// and refined by Lloyd iterations until no assignment changes or
/// `max_iters` is reached. Ties in assignment go to the lowest cluster
/// index, so results are a pure function of `(ids, seed)`.
pub fn kmeans(
    ids: &BTreeSet<u64>,
    emb: &EmbeddingSet,
    k: usize,
    spec: DistanceSpec,
    lex: Option<&Bm25Corpus>,
    seed: u64,
    max_iters: usize,
) -> Result<Partition, ClusterError> {
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if ids.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    spec.validate()?;
    emb.covers(ids.iter().copied()).map_err(|e| match e {
        crate::embed::EmbedError::MissingRecord { id } => ClusterError::MissingEmbedding { id },
        _ => ClusterError::EmptyInput,
    })?;

    let members: Vec<u64> = ids.iter().copied().collect();
    if members.len() <= k {
        let clusters = members
            .iter()
            .enumerate()
            .map(|(i, &id)| Cluster {
                index: i,
                members: alloc::vec![id],
                centroid: Some(emb.get(id).unwrap().to_vec()),
                medoid: Some(id),
            })
            .collect::<Vec<_>>();
        let assignment = members.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        return Ok(Partition { clusters, assignment, objective: 0.0, iterations: 0 });
    }

    if spec.pure_euclidean() {
        lloyd_centroid(&members, emb, k, seed, max_iters)
    } else {
        lloyd_medoid(&members, emb, lex, spec, k, seed, max_iters)
    }
}

/// Weighted index pick proportional to `weights`. Falls back to the first
/// strictly positive weight (or index 0) if rounding leaves nothing chosen.
fn weighted_pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    let r = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if r < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn lloyd_centroid(
    members: &[u64],
    emb: &EmbeddingSet,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<Partition, ClusterError> {
    let n = members.len();
    let dim = emb.dim();
    let points: Vec<&[f32]> = members.iter().map(|&id| emb.get(id).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding on squared Euclidean distance.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rng.gen_range(0..n);
    centers.push(points[first].iter().map(|&v| v as f64).collect());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_to_center(p, &centers[0])).collect();
    while centers.len() < k {
        let pick = weighted_pick(&mut rng, &d2);
        centers.push(points[pick].iter().map(|&v| v as f64).collect());
        let c = centers.last().unwrap();
        for (d, p) in d2.iter_mut().zip(&points) {
            let nd = sq_to_center(p, c);
            if nd < *d {
                *d = nd;
            }
        }
    }

    let mut assign: Vec<usize> = alloc::vec![0; n];
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        // Assignment step; ties break to the lowest cluster index.
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = sq_to_center(p, &centers[0]);
            for (c, center) in centers.iter().enumerate().skip(1) {
                let d = sq_to_center(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }

        // Repair empty clusters with the point farthest from its center.
        // Donors must keep at least one member or the repair could cycle.
        loop {
            let mut counts = alloc::vec![0usize; k];
            for &a in &assign {
                counts[a] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
            let (far, _) = assign
                .iter()
                .enumerate()
                .filter(|&(_, &a)| counts[a] > 1)
                .map(|(i, &a)| (i, sq_to_center(points[i], &centers[a])))
                .max_by(|(ia, da), (ib, db)| {
                    da.partial_cmp(db).unwrap().then(ib.cmp(ia))
                })
                .expect("n > k guarantees a donor cluster with 2+ members");
            assign[far] = empty;
            changed = true;
        }

        // Update step: mean of each cluster.
        let mut sums = alloc::vec![alloc::vec![0.0f64; dim]; k];
        let mut counts = alloc::vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, &v) in sums[a].iter_mut().zip(points[i]) {
                *s += v as f64;
            }
        }
        for (c, sum) in sums.iter_mut().enumerate() {
            for s in sum.iter_mut() {
                *s /= counts[c] as f64;
            }
        }
        centers = sums;

        if !changed {
            break;
        }
    }

    // Final objective against the final centers.
    let objective: f64 = assign
        .iter()
        .enumerate()
        .map(|(i, &a)| sq_to_center(points[i], &centers[a]))
        .sum();

    Ok(build_partition(members, &assign, k, |c, cluster_members| Cluster {
        index: c,
        members: cluster_members.to_vec(),
        centroid: Some(centers[c].iter().map(|&v| v as f32).collect()),
        medoid: None,
    }, objective, iterations))
}

fn sq_to_center(p: &[f32], c: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&x, &y) in p.iter().zip(c) {
        let d = x as f64 - y;
        acc += d * d;
    }
    acc
}

fn lloyd_medoid(
    members: &[u64],
    emb: &EmbeddingSet,
    lex: Option<&Bm25Corpus>,
    spec: DistanceSpec,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<Partition, ClusterError> {
    let n = members.len();
    let id_set: BTreeSet<u64> = members.iter().copied().collect();
    let ctx = HybridContext::over_id_set(&id_set, emb, lex, spec)?;

    // Full pairwise matrix; the medoid update needs it anyway.
    let mut dist = alloc::vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = ctx.distance(members[i], members[j]);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let d_at = |i: usize, j: usize| dist[i * n + j];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    medoids.push(rng.gen_range(0..n));
    let sq = |x: f64| x * x;
    let mut d2: Vec<f64> = (0..n).map(|i| sq(d_at(i, medoids[0]))).collect();
    while medoids.len() < k {
        let pick = weighted_pick(&mut rng, &d2);
        medoids.push(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            let nd = sq(d_at(i, pick));
            if nd < *d {
                *d = nd;
            }
        }
    }

    let mut assign: Vec<usize> = alloc::vec![0; n];
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        let mut changed = false;
        for (i, slot) in assign.iter_mut().enumerate() {
            let mut best = 0;
            let mut best_d = d_at(i, medoids[0]);
            for (c, &m) in medoids.iter().enumerate().skip(1) {
                let d = d_at(i, m);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if *slot != best {
                *slot = best;
                changed = true;
            }
        }

        loop {
            let mut counts = alloc::vec![0usize; k];
            for &a in &assign {
                counts[a] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
            let (far, _) = assign
                .iter()
                .enumerate()
                .filter(|&(_, &a)| counts[a] > 1)
                .map(|(i, &a)| (i, d_at(i, medoids[a])))
                .max_by(|(ia, da), (ib, db)| da.partial_cmp(db).unwrap().then(ib.cmp(ia)))
                .expect("n > k guarantees a donor cluster with 2+ members");
            assign[far] = empty;
            changed = true;
        }

        // Medoid update: member minimizing the summed distance to its cluster.
        for (c, medoid) in medoids.iter_mut().enumerate() {
            let cluster: Vec<usize> =
                (0..n).filter(|&i| assign[i] == c).collect();
            let best = cluster
                .iter()
                .map(|&cand| {
                    let cost: f64 = cluster.iter().map(|&other| d_at(cand, other)).sum();
                    (cand, cost)
                })
                .min_by(|(ia, ca), (ib, cb)| ca.partial_cmp(cb).unwrap().then(ia.cmp(ib)))
                .map(|(cand, _)| cand)
                .unwrap();
            *medoid = best;
        }

        if !changed {
            break;
        }
    }

    let objective: f64 = (0..n).map(|i| d_at(i, medoids[assign[i]])).sum();
    Ok(build_partition(members, &assign, k, |c, cluster_members| Cluster {
        index: c,
        members: cluster_members.to_vec(),
        centroid: None,
        medoid: Some(members[medoids[c]]),
    }, objective, iterations))
}

fn build_partition(
    members: &[u64],
    assign: &[usize],
    k: usize,
    mut make: impl FnMut(usize, &[u64]) -> Cluster,
    objective: f64,
    iterations: usize,
) -> Partition {
    let mut by_cluster: Vec<Vec<u64>> = alloc::vec![Vec::new(); k];
    for (i, &a) in assign.iter().enumerate() {
        by_cluster[a].push(members[i]);
    }
    let mut clusters = Vec::with_capacity(k);
    let mut assignment = BTreeMap::new();
    let mut next = 0;
    for cluster_members in by_cluster.iter_mut() {
        if cluster_members.is_empty() {
            continue;
        }
        cluster_members.sort_unstable();
        for &id in cluster_members.iter() {
            assignment.insert(id, next);
        }
        clusters.push(make(next, cluster_members));
        next += 1;
    }
    for (i, c) in clusters.iter_mut().enumerate() {
        c.index = i;
    }
    Partition { clusters, assignment, objective, iterations }
}
