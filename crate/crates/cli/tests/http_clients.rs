//! HTTP oracle and embedder tests against a minimal in-process HTTP server.

mod common;

use std::sync::Arc;

use common::{Handler, MockServer};
use semfilter::http::{HttpEmbedder, HttpOracle, OracleConfig};
use semfilter_core::data::{Predicate, Record, Table};
use semfilter_core::embed::TextEmbedder;
use semfilter_core::oracle::{Oracle, OracleError, OutcomeSource};

fn chat_reply(content: &str, pt: u64, ct: u64) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}}],
        "usage": {"prompt_tokens": pt, "completion_tokens": ct}
    })
    .to_string()
}

fn test_table(rows: &[(u64, &str)]) -> Table {
    let records = rows
        .iter()
        .map(|&(id, text)| Record::new(id).with_column("text", text))
        .collect();
    Table::new(vec!["text".into()], records).unwrap()
}

fn oracle_config(base_url: &str) -> OracleConfig {
    OracleConfig {
        base_url: base_url.to_string(),
        model: "test-model".into(),
        parallelism: 4,
        retry_budget: 3,
        backoff_ms: 1,
        ..OracleConfig::default()
    }
}

#[test]
fn oracle_labels_follow_prompt_content() {
    // The handler decides from the rendered prompt, so completion order and
    // parallel dispatch cannot scramble record/label pairing.
    let handler: Arc<Handler> = Arc::new(|_, body, _| {
        let content = if body.contains("laudable") { "True" } else { "False." };
        (200, chat_reply(content, 11, 1))
    });
    let server = MockServer::start(handler);
    let table = test_table(&[(9, "laudable"), (2, "dreadful"), (5, "laudable"), (4, "meh")]);
    let predicate = Predicate::new("The {text} movie is good.", None).unwrap();
    let mut oracle = HttpOracle::new(oracle_config(&server.base_url)).unwrap();
    let refs: Vec<&Record> = table.records().iter().collect();
    let outcomes = oracle.invoke_batch(&predicate, &refs).unwrap();

    let ids: Vec<u64> = outcomes.iter().map(|o| o.id).collect();
    assert_eq!(ids, vec![2, 4, 5, 9], "sorted by id");
    let labels: Vec<bool> = outcomes.iter().map(|o| o.label).collect();
    assert_eq!(labels, vec![false, false, true, true]);
    for o in &outcomes {
        assert_eq!(o.source, OutcomeSource::Llm);
        assert_eq!(o.prompt_tokens, 11);
        assert_eq!(o.completion_tokens, 1);
    }
    assert_eq!(server.hit_count(), 4);
}

#[test]
fn second_run_is_served_from_cache() {
    let handler: Arc<Handler> = Arc::new(|_, _, _| (200, chat_reply("True", 7, 2)));
    let server = MockServer::start(handler);
    let dir = tempfile::tempdir().unwrap();
    let cache_path = dir.path().join("cache.jsonl");
    let table = test_table(&[(1, "a"), (2, "b"), (3, "c")]);
    let predicate = Predicate::new("{text}?", None).unwrap();
    let refs: Vec<&Record> = table.records().iter().collect();

    let mut cfg = oracle_config(&server.base_url);
    cfg.cache_path = Some(cache_path.clone());
    let mut oracle = HttpOracle::new(cfg.clone()).unwrap();
    let first = oracle.invoke_batch(&predicate, &refs).unwrap();
    assert_eq!(server.hit_count(), 3);
    assert!(first.iter().all(|o| o.source == OutcomeSource::Llm));

    // Same batch again, same oracle: all hits.
    let second = oracle.invoke_batch(&predicate, &refs).unwrap();
    assert_eq!(server.hit_count(), 3, "no new requests");
    assert!(second.iter().all(|o| o.source == OutcomeSource::Cache));
    assert!(second.iter().all(|o| o.prompt_tokens == 7 && o.completion_tokens == 2));

    // Fresh process (new oracle instance) reads the persisted cache.
    let mut reopened = HttpOracle::new(cfg).unwrap();
    let third = reopened.invoke_batch(&predicate, &refs).unwrap();
    assert_eq!(server.hit_count(), 3);
    assert!(third.iter().all(|o| o.source == OutcomeSource::Cache));

    // A different predicate misses.
    let other = Predicate::new("{text}!", None).unwrap();
    let mut oracle2 = HttpOracle::new(oracle_config(&server.base_url)).unwrap();
    let _ = oracle2.invoke_batch(&other, &refs).unwrap();
    assert_eq!(server.hit_count(), 6);
}

#[test]
fn transient_errors_are_retried() {
    let handler: Arc<Handler> = Arc::new(|_, _, index| {
        if index < 2 {
            (500, "{\"error\": \"boom\"}".into())
        } else {
            (200, chat_reply("The answer is True.", 1, 1))
        }
    });
    let server = MockServer::start(handler);
    let table = test_table(&[(1, "x")]);
    let predicate = Predicate::new("{text}", None).unwrap();
    let mut oracle = HttpOracle::new(oracle_config(&server.base_url)).unwrap();
    let refs: Vec<&Record> = table.records().iter().collect();
    let outcomes = oracle.invoke_batch(&predicate, &refs).unwrap();
    assert!(outcomes[0].label);
    assert_eq!(server.hit_count(), 3);
}

#[test]
fn exhausted_retries_surface_transport_error() {
    let handler: Arc<Handler> = Arc::new(|_, _, _| (503, "{}".into()));
    let server = MockServer::start(handler);
    let table = test_table(&[(1, "x")]);
    let predicate = Predicate::new("{text}", None).unwrap();
    let mut cfg = oracle_config(&server.base_url);
    cfg.retry_budget = 1;
    let mut oracle = HttpOracle::new(cfg).unwrap();
    let refs: Vec<&Record> = table.records().iter().collect();
    match oracle.invoke_batch(&predicate, &refs) {
        Err(OracleError::Transport(_)) => {}
        other => panic!("expected transport error, got {other:?}"),
    }
    assert_eq!(server.hit_count(), 2);
}

#[test]
fn undecidable_completion_gets_one_clarification() {
    let handler: Arc<Handler> = Arc::new(|_, body, _| {
        if body.contains("single word") {
            (200, chat_reply("False", 2, 1))
        } else {
            (200, chat_reply("Hmm, unclear.", 2, 4))
        }
    });
    let server = MockServer::start(handler);
    let table = test_table(&[(1, "x")]);
    let predicate = Predicate::new("{text}", None).unwrap();
    let mut oracle = HttpOracle::new(oracle_config(&server.base_url)).unwrap();
    let refs: Vec<&Record> = table.records().iter().collect();
    let outcomes = oracle.invoke_batch(&predicate, &refs).unwrap();
    assert!(!outcomes[0].label);
    // Token accounting covers both attempts of the single dispatch.
    assert_eq!(outcomes[0].prompt_tokens, 4);
    assert_eq!(outcomes[0].completion_tokens, 5);
    assert_eq!(server.hit_count(), 2);
}

#[test]
fn persistently_undecidable_is_an_error() {
    let handler: Arc<Handler> = Arc::new(|_, _, _| (200, chat_reply("shrug", 1, 1)));
    let server = MockServer::start(handler);
    let table = test_table(&[(42, "x")]);
    let predicate = Predicate::new("{text}", None).unwrap();
    let mut oracle = HttpOracle::new(oracle_config(&server.base_url)).unwrap();
    let refs: Vec<&Record> = table.records().iter().collect();
    match oracle.invoke_batch(&predicate, &refs) {
        Err(OracleError::Undecidable { id: 42, .. }) => {}
        other => panic!("expected undecidable, got {other:?}"),
    }
}

#[test]
fn embedder_returns_vectors_in_input_order_with_batching() {
    let handler: Arc<Handler> = Arc::new(|path, body, _| {
        assert!(path.ends_with("/v1/embeddings"), "path {path}");
        let parsed: serde_json::Value = serde_json::from_str(body).unwrap();
        let inputs = parsed["input"].as_array().unwrap();
        let data: Vec<serde_json::Value> = inputs
            .iter()
            .map(|t| {
                let len = t.as_str().unwrap().len() as f32;
                serde_json::json!({"embedding": [len, 1.0]})
            })
            .collect();
        (200, serde_json::json!({ "data": data }).to_string())
    });
    let server = MockServer::start(handler);
    let mut embedder = HttpEmbedder::new(&server.base_url, "e5").unwrap();
    embedder.batch_size = 2;
    embedder.backoff_ms = 1;
    let texts = ["a", "bb", "ccc", "dddd", "eeeee"];
    let vectors = embedder.embed(&texts).unwrap();
    assert_eq!(vectors.len(), 5);
    for (t, v) in texts.iter().zip(&vectors) {
        assert_eq!(v[0], t.len() as f32);
    }
    assert_eq!(server.hit_count(), 3, "5 texts in batches of 2");
}

#[test]
fn embedder_retries_then_succeeds() {
    let handler: Arc<Handler> = Arc::new(|_, _, index| {
        if index == 0 {
            (429, "{}".into())
        } else {
            (200, serde_json::json!({"data": [{"embedding": [1.0]}]}).to_string())
        }
    });
    let server = MockServer::start(handler);
    let mut embedder = HttpEmbedder::new(&server.base_url, "e5").unwrap();
    embedder.backoff_ms = 1;
    let vectors = embedder.embed(&["x"]).unwrap();
    assert_eq!(vectors, vec![vec![1.0]]);
    assert_eq!(server.hit_count(), 2);
}
