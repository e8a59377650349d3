//! Property tests for the core invariants: vote partitions, score ranges,
//! monotonicity, k-means cover/determinism/objective, hybrid-distance axioms,
//! and engine completeness.

use std::collections::BTreeSet;

use proptest::prelude::*;

use semfilter_core::cluster::{kmeans, DistanceSpec, HybridContext};
use semfilter_core::data::{Predicate, Record, Table};
use semfilter_core::embed::EmbeddingSet;
use semfilter_core::engine::{
    sample_cluster, semantic_filter, FilterConfig, Provenance, Strategy as VoteStrategy,
};
use semfilter_core::oracle::{ColumnOracle, OracleOutcome, OutcomeSource};
use semfilter_core::vote::{sim_vote, uni_vote, Thresholds};

fn outcomes_from(labels: &[bool]) -> (Vec<OracleOutcome>, BTreeSet<u64>) {
    let outs: Vec<OracleOutcome> = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| OracleOutcome {
            id: i as u64,
            label,
            prompt_tokens: 0,
            completion_tokens: 0,
            source: OutcomeSource::Mock,
        })
        .collect();
    let ids = outs.iter().map(|o| o.id).collect();
    (outs, ids)
}

fn arb_thresholds() -> impl Strategy<Value = Thresholds> {
    (0.0..0.45f64, 0.55..1.0f64).prop_map(|(lb, ub)| Thresholds::new(lb, ub).unwrap())
}

proptest! {
    #[test]
    fn uni_vote_partitions_the_unsampled(
        labels in prop::collection::vec(any::<bool>(), 1..60),
        extra in 1usize..120,
        th in arb_thresholds(),
    ) {
        let (outs, sampled) = outcomes_from(&labels);
        let cluster: BTreeSet<u64> = (0..(labels.len() + extra) as u64).collect();
        let report = uni_vote(&outs, &cluster, &sampled, th).unwrap();
        let unsampled: BTreeSet<u64> = cluster.difference(&sampled).copied().collect();

        let mut union = report.positives.clone();
        union.extend(&report.negatives);
        union.extend(&report.undetermined);
        prop_assert_eq!(&union, &unsampled);
        prop_assert_eq!(
            report.positives.len() + report.negatives.len() + report.undetermined.len(),
            unsampled.len()
        );
        for &s in report.scores.values() {
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn sim_vote_partitions_and_stays_in_unit_interval(
        labels in prop::collection::vec(any::<bool>(), 1..40),
        extra in 1usize..80,
        th in arb_thresholds(),
        salt in 0u64..1000,
    ) {
        let (outs, sampled) = outcomes_from(&labels);
        let cluster: BTreeSet<u64> = (0..(labels.len() + extra) as u64).collect();
        let sim = move |a: u64, b: u64| 0.25 + ((a.wrapping_mul(31).wrapping_add(b).wrapping_add(salt)) % 17) as f64;
        let report = sim_vote(&outs, &cluster, &sampled, th, &sim).unwrap();
        let unsampled: BTreeSet<u64> = cluster.difference(&sampled).copied().collect();

        let mut union = report.positives.clone();
        union.extend(&report.negatives);
        union.extend(&report.undetermined);
        prop_assert_eq!(&union, &unsampled);
        for &s in report.scores.values() {
            prop_assert!((0.0..=1.0).contains(&s), "score {} outside [0,1]", s);
        }
    }

    #[test]
    fn flipping_a_label_to_true_never_decreases_scores(
        labels in prop::collection::vec(any::<bool>(), 2..40),
        extra in 1usize..40,
        th in arb_thresholds(),
    ) {
        prop_assume!(labels.iter().any(|l| !l));
        let flip_at = labels.iter().position(|l| !l).unwrap();
        let mut flipped = labels.clone();
        flipped[flip_at] = true;

        let (outs_a, sampled) = outcomes_from(&labels);
        let (outs_b, _) = outcomes_from(&flipped);
        let cluster: BTreeSet<u64> = (0..(labels.len() + extra) as u64).collect();

        let uni_a = uni_vote(&outs_a, &cluster, &sampled, th).unwrap();
        let uni_b = uni_vote(&outs_b, &cluster, &sampled, th).unwrap();
        for (id, &s) in &uni_a.scores {
            prop_assert!(uni_b.scores[id] >= s);
        }

        let sim = |a: u64, b: u64| 0.5 + ((a ^ b) % 7) as f64;
        let sim_a = sim_vote(&outs_a, &cluster, &sampled, th, &sim).unwrap();
        let sim_b = sim_vote(&outs_b, &cluster, &sampled, th, &sim).unwrap();
        for (id, &s) in &sim_a.scores {
            prop_assert!(sim_b.scores[id] >= s);
        }
    }

    #[test]
    fn constant_similarity_matches_uni_vote(
        labels in prop::collection::vec(any::<bool>(), 1..50),
        extra in 1usize..60,
        th in arb_thresholds(),
        c in prop::sample::select(vec![0.5f64, 1.0, 2.0, 3.0, 7.0, 64.0]),
    ) {
        let (outs, sampled) = outcomes_from(&labels);
        let cluster: BTreeSet<u64> = (0..(labels.len() + extra) as u64).collect();
        let uni = uni_vote(&outs, &cluster, &sampled, th).unwrap();
        let sim = sim_vote(&outs, &cluster, &sampled, th, &move |_, _| c).unwrap();
        prop_assert_eq!(uni, sim);
    }
}

fn random_embeddings(n: usize, dim: usize, seed: u64) -> (BTreeSet<u64>, EmbeddingSet) {
    // Cheap deterministic pseudo-random floats via the crate's own mixer.
    let mut emb = EmbeddingSet::new(dim).unwrap();
    let mut ids = BTreeSet::new();
    for i in 0..n as u64 {
        let v: Vec<f32> = (0..dim)
            .map(|d| {
                let h = semfilter_core::math::mix64(seed ^ (i << 8) ^ d as u64);
                (h >> 40) as f32 / (1u64 << 24) as f32
            })
            .collect();
        emb.insert(i, v).unwrap();
        ids.insert(i);
    }
    (ids, emb)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kmeans_covers_ids_and_is_deterministic(
        n in 2usize..80,
        k in 1usize..8,
        seed in any::<u64>(),
    ) {
        let (ids, emb) = random_embeddings(n, 3, 0xABCD);
        let a = kmeans(&ids, &emb, k, DistanceSpec::default(), None, seed, 100).unwrap();
        let b = kmeans(&ids, &emb, k, DistanceSpec::default(), None, seed, 100).unwrap();
        prop_assert_eq!(&a.assignment, &b.assignment);

        let mut seen = BTreeSet::new();
        for c in &a.clusters {
            prop_assert!(!c.members.is_empty(), "empty cluster survived");
            for &id in &c.members {
                prop_assert!(seen.insert(id));
            }
        }
        prop_assert_eq!(seen, ids);
    }

    #[test]
    fn lloyd_objective_is_nonincreasing_over_iteration_caps(
        seed in any::<u64>(),
    ) {
        let (ids, emb) = random_embeddings(60, 2, 0x77);
        let mut last = f64::INFINITY;
        for iters in 1..=8 {
            let p = kmeans(&ids, &emb, 4, DistanceSpec::default(), None, seed, iters).unwrap();
            prop_assert!(p.objective <= last + 1e-9,
                "objective rose from {} to {} at cap {}", last, p.objective, iters);
            last = p.objective;
        }
    }

    #[test]
    fn hybrid_distance_axioms(
        n in 2usize..12,
        lambda in 0.0..=1.0f64,
        seed in 0u64..1000,
    ) {
        let (ids, emb) = random_embeddings(n, 3, seed);
        let texts: Vec<(u64, String)> = ids
            .iter()
            .map(|&i| (i, format!("word{} token{} filler", i % 5, i % 3)))
            .collect();
        let corpus = semfilter_core::bm25::Bm25Corpus::build(
            texts.iter().map(|(i, t)| (*i, t.as_str())),
        )
        .unwrap();
        let spec = DistanceSpec { lambda, ..DistanceSpec::default() };
        let ctx = HybridContext::over_id_set(&ids, &emb, Some(&corpus), spec).unwrap();
        for &a in &ids {
            prop_assert_eq!(ctx.distance(a, a), 0.0);
            for &b in &ids {
                let d = ctx.distance(a, b);
                prop_assert!((0.0..=1.0 + 1e-9).contains(&d), "d = {}", d);
                prop_assert!((d - ctx.distance(b, a)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sample_size_never_exceeds_cluster(
        n in 1usize..5000,
        xi in 0.001..=1.0f64,
        min_sample in 1usize..200,
        seed in any::<u64>(),
    ) {
        let ids: BTreeSet<u64> = (0..n as u64).collect();
        let s = sample_cluster(&ids, xi, min_sample, seed);
        let expected = ((xi * n as f64).ceil() as usize).max(min_sample).min(n);
        prop_assert_eq!(s.len(), expected);
        prop_assert!(s.is_subset(&ids));
    }
}

/// The similarity-vote score mean over the unsampled tuples tracks the
/// sample mean under uniform random sampling (the cornerstone of the
/// weighted guarantee). Exact for constant similarity; near-equality is
/// checked empirically for geometric similarities over random embeddings.
#[test]
fn sim_vote_score_mean_tracks_sample_mean() {
    let n = 400usize;
    let (ids, emb) = random_embeddings(n, 4, 0xFEED);
    for trial in 0..10u64 {
        let sampled = sample_cluster(&ids, 0.25, 1, 1000 + trial);
        let labels: Vec<bool> = sampled.iter().map(|&id| id % 3 != 0).collect();
        let outs: Vec<OracleOutcome> = sampled
            .iter()
            .zip(&labels)
            .map(|(&id, &label)| OracleOutcome {
                id,
                label,
                prompt_tokens: 0,
                completion_tokens: 0,
                source: OutcomeSource::Mock,
            })
            .collect();
        let sample_mean =
            labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64;

        let pairs: Vec<(u64, u64)> = ids
            .difference(&sampled)
            .flat_map(|&r| sampled.iter().map(move |&s| (r, s)))
            .collect();
        let ctx = HybridContext::over_pairs(&pairs, &emb, None, DistanceSpec::default()).unwrap();
        let sim = |a: u64, b: u64| semfilter_core::vote::similarity_from_distance(ctx.distance(a, b));
        let report = sim_vote(
            &outs,
            &ids,
            &sampled,
            Thresholds::new(0.05, 0.95).unwrap(),
            &sim,
        )
        .unwrap();
        let mean_score: f64 =
            report.scores.values().sum::<f64>() / report.scores.len() as f64;
        assert!(
            (mean_score - sample_mean).abs() < 0.05,
            "trial {trial}: mean score {mean_score} vs sample mean {sample_mean}"
        );
    }
}

// Engine-level invariants on random mixed workloads: every id labeled once,
// the call count never exceeds the table, and every oracle- or
// fallback-labeled id matches a direct oracle call.
proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn engine_completeness_and_fallback_exactness(
        seed in any::<u64>(),
        k in 1usize..4,
        strategy in prop::sample::select(vec![VoteStrategy::Uni, VoteStrategy::Sim]),
        min_sample in 5usize..40,
    ) {
        let n = 150usize;
        let (ids, emb) = random_embeddings(n, 2, seed.wrapping_add(1));
        let records: Vec<Record> = ids
            .iter()
            .map(|&i| {
                Record::new(i)
                    .with_column("text", "payload")
                    .with_column("label", if (i * 2654435761) % 5 < 2 { "true" } else { "false" })
            })
            .collect();
        let table = Table::new(vec!["text".into(), "label".into()], records).unwrap();
        let predicate = Predicate::new("{text}", None).unwrap();
        let cfg = FilterConfig {
            k,
            strategy,
            min_sample,
            xi: 0.05,
            max_depth: 2,
            seed,
            ..FilterConfig::default()
        };
        let mut oracle = ColumnOracle::new("label");
        let result = semantic_filter(&table, &emb, &predicate, &cfg, &mut oracle).unwrap();

        prop_assert_eq!(result.labels.len(), n);
        prop_assert!(result.stats.llm_calls <= n as u64);
        for (id, &p) in &result.provenance {
            if p != Provenance::Vote {
                let expected = table.get(*id).unwrap().column("label") == Some("true");
                prop_assert_eq!(result.labels[id], expected);
            }
        }
    }
}
