//! HTTP clients for OpenAI-compatible endpoints: the chat-completions oracle
//! and the embeddings provider. Both retry transient failures with bounded
//! exponential backoff and read the API key from an environment variable
//! (never from flags).

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use semfilter_core::data::{Predicate, Record};
use semfilter_core::embed::{EmbedError, TextEmbedder};
use semfilter_core::oracle::{parse_label, Oracle, OracleError, OracleOutcome, OutcomeSource};
use serde::{Deserialize, Serialize};

use crate::cache::{CacheEntry, OracleCache};

/// Environment variable consulted for the bearer token.
pub const API_KEY_ENV: &str = "OPENAI_API_KEY";

/// Configuration of the chat-completions oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u64,
    /// Maximum in-flight requests per batch.
    pub parallelism: usize,
    /// Additional attempts after the first failure.
    pub retry_budget: u32,
    /// First backoff delay; doubles per attempt, capped at 5 s.
    pub backoff_ms: u64,
    pub cache_path: Option<std::path::PathBuf>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            base_url: "http://localhost:8000".into(),
            model: "default".into(),
            temperature: 0.7,
            max_output_tokens: 32,
            parallelism: 8,
            retry_budget: 3,
            backoff_ms: 250,
            cache_path: None,
        }
    }
}

fn api_key() -> Option<String> {
    std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty())
}

fn backoff(cfg_ms: u64, attempt: u32) -> Duration {
    let ms = cfg_ms.saturating_mul(1u64 << attempt.min(16)).min(5_000);
    Duration::from_millis(ms)
}

fn is_retryable_status(status: reqwest::StatusCode) -> bool {
    status.as_u16() == 429 || status.is_server_error()
}

/// Issues `send` with up to `retry_budget` retries on transport errors and
/// retryable HTTP statuses.
fn with_retries<T>(
    retry_budget: u32,
    backoff_ms: u64,
    mut send: impl FnMut() -> Result<T, String>,
) -> Result<T, String> {
    let mut last = String::new();
    for attempt in 0..=retry_budget {
        match send() {
            Ok(v) => return Ok(v),
            Err(e) => {
                last = e;
                if attempt < retry_budget {
                    std::thread::sleep(backoff(backoff_ms, attempt));
                }
            }
        }
    }
    Err(last)
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u64,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize, Default)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

/// LLM oracle over `POST {base}/v1/chat/completions`.
///
/// Consults the cache before dispatching, runs misses with bounded
/// parallelism, appends fresh results to the cache, and returns outcomes
/// sorted by record id regardless of completion order. An undecidable
/// completion is retried once with an appended clarification line before
/// becoming an error. One record dispatch counts as one call even when the
/// clarification retry fires.
pub struct HttpOracle {
    cfg: OracleConfig,
    client: reqwest::blocking::Client,
    cache: Option<OracleCache>,
}

impl HttpOracle {
    pub fn new(cfg: OracleConfig) -> Result<Self, OracleError> {
        let cache = match &cfg.cache_path {
            Some(path) => Some(
                OracleCache::open(path)
                    .map_err(|e| OracleError::Transport(format!("cache: {e}")))?,
            ),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| OracleError::Transport(e.to_string()))?;
        Ok(HttpOracle { cfg, client, cache })
    }

    fn complete(&self, prompt: &str) -> Result<(String, u64, u64), String> {
        let url = format!("{}/v1/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let body = ChatRequest {
            model: &self.cfg.model,
            messages: vec![ChatMessage { role: "user", content: prompt }],
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_output_tokens,
        };
        with_retries(self.cfg.retry_budget, self.cfg.backoff_ms, || {
            let mut req = self.client.post(&url).json(&body);
            if let Some(key) = api_key() {
                req = req.bearer_auth(key);
            }
            let resp = req.send().map_err(|e| format!("transport: {e}"))?;
            let status = resp.status();
            if is_retryable_status(status) {
                return Err(format!("retryable status {status}"));
            }
            if !status.is_success() {
                let text = resp.text().unwrap_or_default();
                return Err(format!("status {status}: {text}"));
            }
            let parsed: ChatResponse =
                resp.json().map_err(|e| format!("bad response body: {e}"))?;
            let content = parsed
                .choices
                .first()
                .and_then(|c| c.message.content.clone())
                .unwrap_or_default();
            let usage = parsed.usage.unwrap_or_default();
            Ok((content, usage.prompt_tokens, usage.completion_tokens))
        })
    }

    /// Decides one record: completion, label parse, one clarification retry.
    fn decide(&self, id: u64, prompt: &str) -> Result<OracleOutcome, OracleError> {
        let (text, pt, ct) =
            self.complete(prompt).map_err(OracleError::Transport)?;
        if let Some(label) = parse_label(&text) {
            return Ok(OracleOutcome {
                id,
                label,
                prompt_tokens: pt,
                completion_tokens: ct,
                source: OutcomeSource::Llm,
            });
        }
        let clarified = format!(
            "{prompt}\nRespond with the single word True or the single word False."
        );
        let (text2, pt2, ct2) =
            self.complete(&clarified).map_err(OracleError::Transport)?;
        match parse_label(&text2) {
            Some(label) => Ok(OracleOutcome {
                id,
                label,
                prompt_tokens: pt + pt2,
                completion_tokens: ct + ct2,
                source: OutcomeSource::Llm,
            }),
            None => Err(OracleError::Undecidable { id, text: text2 }),
        }
    }
}

impl Oracle for HttpOracle {
    fn invoke_batch(
        &mut self,
        predicate: &Predicate,
        records: &[&Record],
    ) -> Result<Vec<OracleOutcome>, OracleError> {
        if records.is_empty() {
            return Err(OracleError::EmptyBatch);
        }
        let pkey = predicate.cache_key();
        let mut outcomes: Vec<OracleOutcome> = Vec::with_capacity(records.len());
        let mut misses: Vec<(u64, String)> = Vec::new();
        for record in records {
            if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(pkey, record.id)) {
                outcomes.push(OracleOutcome {
                    id: record.id,
                    label: hit.label,
                    prompt_tokens: hit.pt,
                    completion_tokens: hit.ct,
                    source: OutcomeSource::Cache,
                });
            } else {
                let prompt = predicate.render(record).map_err(|e| {
                    OracleError::Transport(format!("render: {e}"))
                })?;
                misses.push((record.id, prompt));
            }
        }

        if !misses.is_empty() {
            let next = AtomicUsize::new(0);
            let results: Mutex<Vec<Result<OracleOutcome, OracleError>>> =
                Mutex::new(Vec::with_capacity(misses.len()));
            let workers = self.cfg.parallelism.max(1).min(misses.len());
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    scope.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some((id, prompt)) = misses.get(i) else { break };
                        let result = self.decide(*id, prompt);
                        results.lock().unwrap().push(result);
                    });
                }
            });
            let mut fresh_entries = Vec::new();
            for result in results.into_inner().unwrap() {
                let outcome = result?;
                fresh_entries.push(CacheEntry {
                    pkey,
                    rid: outcome.id,
                    label: outcome.label,
                    pt: outcome.prompt_tokens,
                    ct: outcome.completion_tokens,
                });
                outcomes.push(outcome);
            }
            if let Some(cache) = &mut self.cache {
                cache
                    .append(&fresh_entries)
                    .map_err(|e| OracleError::Transport(format!("cache: {e}")))?;
            }
        }

        outcomes.sort_by_key(|o| o.id);
        Ok(outcomes)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f32>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

/// Embeddings provider over `POST {base}/v1/embeddings`. Inputs are sent in
/// transport batches; the response vectors are in input order.
pub struct HttpEmbedder {
    pub base_url: String,
    pub model: String,
    pub batch_size: usize,
    pub retry_budget: u32,
    pub backoff_ms: u64,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, model: &str) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| EmbedError::Provider(e.to_string()))?;
        Ok(HttpEmbedder {
            base_url: base_url.trim_end_matches('/').to_owned(),
            model: model.to_owned(),
            batch_size: 64,
            retry_budget: 3,
            backoff_ms: 250,
            client,
        })
    }
}

impl TextEmbedder for HttpEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let url = format!("{}/v1/embeddings", self.base_url);
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.batch_size.max(1)) {
            let body = EmbedRequest { model: &self.model, input: batch };
            let vectors = with_retries(self.retry_budget, self.backoff_ms, || {
                let mut req = self.client.post(&url).json(&body);
                if let Some(key) = api_key() {
                    req = req.bearer_auth(key);
                }
                let resp = req.send().map_err(|e| format!("transport: {e}"))?;
                let status = resp.status();
                if is_retryable_status(status) {
                    return Err(format!("retryable status {status}"));
                }
                if !status.is_success() {
                    return Err(format!("status {status}"));
                }
                let parsed: EmbedResponse =
                    resp.json().map_err(|e| format!("bad response body: {e}"))?;
                Ok(parsed.data.into_iter().map(|d| d.embedding).collect::<Vec<_>>())
            })
            .map_err(EmbedError::Provider)?;
            if vectors.len() != batch.len() {
                return Err(EmbedError::CountMismatch {
                    expected: batch.len(),
                    got: vectors.len(),
                });
            }
            out.extend(vectors);
        }
        Ok(out)
    }
}
