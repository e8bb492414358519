//! OpenAI-compatible chat and embedding client with record/replay fixtures.
//!
//! Every request is reduced to a canonical JSON value and hashed with
//! SHA-256; fixtures are stored one file per hash, so identical requests hit
//! identical fixtures across runs and platforms. Replay mode answers purely
//! from fixtures and never opens a connection. Live calls retry transient
//! failures (timeouts, 429, 5xx) with exponential backoff.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dense::{EmbedError, EmbeddingProvider};

/// Environment variable holding the provider API key.
pub const API_KEY_VAR: &str = "REASONIR_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("missing API key: set {API_KEY_VAR} for live or record mode")]
    MissingApiKey,
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider returned status {status}: {message}")]
    Api { status: u16, message: String },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("no fixture for request hash {hash}; run in record mode first")]
    FixtureMiss { hash: String },
    #[error("fixture store error at {path}: {message}")]
    Fixture { path: String, message: String },
    #[error("inconsistent embedding dimension: expected {expected}, got {got}")]
    EmbedDim { expected: usize, got: usize },
}

/// How the gateway answers requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Network only; nothing persisted.
    Live,
    /// Network on fixture miss; responses persisted for later replay.
    Record,
    /// Fixtures only; never touches the network.
    Replay,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(format!("unknown mode {other:?} (live|record|replay)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Live => "live",
            Mode::Record => "record",
            Mode::Replay => "replay",
        })
    }
}

/// One chat turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

/// A chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: Option<String>,
    pub messages: Vec<ChatMessage>,
    pub max_tokens: u32,
    pub temperature: f64,
    pub model: String,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_tokens < 1 {
            return Err(GatewayError::InvalidRequest("max_tokens must be >= 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest(
                "temperature must be >= 0".into(),
            ));
        }
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "at least one message required".into(),
            ));
        }
        if self.model.is_empty() {
            return Err(GatewayError::InvalidRequest("model must be set".into()));
        }
        Ok(())
    }
}

/// Gateway connection settings.
#[derive(Debug, Clone)]
pub struct ProviderConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub mode: Mode,
    pub fixture_dir: PathBuf,
    pub embed_model: String,
    pub in_flight: usize,
}

impl ProviderConfig {
    /// Replay-only configuration rooted at `fixture_dir`; no key needed.
    pub fn replay(fixture_dir: impl Into<PathBuf>) -> Self {
        ProviderConfig {
            base_url: "https://api.openai.com/v1".into(),
            api_key: api_key_from_env(),
            timeout: Duration::from_secs(30),
            max_retries: 3,
            backoff_base_ms: 250,
            mode: Mode::Replay,
            fixture_dir: fixture_dir.into(),
            embed_model: "text-embedding-3-small".into(),
            in_flight: 4,
        }
    }
}

pub fn api_key_from_env() -> Option<String> {
    std::env::var(API_KEY_VAR).ok().filter(|k| !k.is_empty())
}

/// Canonical JSON value for a chat request; hashing input.
pub fn canonical_chat(request: &ChatRequest) -> Value {
    json!({
        "kind": "chat",
        "model": request.model,
        "system": request.system,
        "messages": request
            .messages
            .iter()
            .map(|m| json!({"role": m.role, "content": m.content}))
            .collect::<Vec<_>>(),
        "max_tokens": request.max_tokens,
        "temperature": request.temperature,
    })
}

/// Canonical JSON value for an embedding request; hashing input.
pub fn canonical_embed(model: &str, texts: &[&str]) -> Value {
    json!({
        "kind": "embed",
        "model": model,
        "texts": texts,
    })
}

/// SHA-256 of the canonical serialization, as lowercase hex.
pub fn hash_value(value: &Value) -> String {
    let canonical = serde_json::to_string(value).expect("value serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Content-addressed fixture files, one `{hash}.json` per request.
///
/// Each file stores `{"request": ..., "response": ...}`. Writes are
/// serialized through a single lock.
pub struct FixtureStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl FixtureStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureStore {
            dir: dir.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn path_for(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.json"))
    }

    /// The stored response for this hash, if any.
    pub fn get(&self, hash: &str) -> Result<Option<Value>, GatewayError> {
        let path = self.path_for(hash);
        let raw = match fs::read_to_string(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => {
                return Err(GatewayError::Fixture {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })
            }
        };
        let value: Value = serde_json::from_str(&raw).map_err(|e| GatewayError::Fixture {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let response = value.get("response").cloned().ok_or_else(|| GatewayError::Fixture {
            path: path.display().to_string(),
            message: "missing \"response\" field".to_string(),
        })?;
        Ok(Some(response))
    }

    /// Persist a (request, response) pair under the request hash.
    pub fn put(&self, hash: &str, request: &Value, response: &Value) -> Result<(), GatewayError> {
        let _guard = self.write_lock.lock().expect("fixture lock");
        fs::create_dir_all(&self.dir).map_err(|e| GatewayError::Fixture {
            path: self.dir.display().to_string(),
            message: e.to_string(),
        })?;
        let path = self.path_for(hash);
        let body = serde_json::to_string_pretty(&json!({
            "request": request,
            "response": response,
        }))
        .expect("fixture serializes");
        fs::write(&path, body).map_err(|e| GatewayError::Fixture {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Sleep schedule before retry attempts: `base * 2^(i-1)` for attempt i >= 1,
/// clamped so the shift cannot overflow. Always nondecreasing.
pub fn backoff_delays(base_ms: u64, max_retries: u32) -> Vec<Duration> {
    (1..=max_retries)
        .map(|i| Duration::from_millis(base_ms.saturating_mul(1u64 << (i - 1).min(20))))
        .collect()
}

enum Attempt<T> {
    Ok(T),
    Retry(String),
    Fatal(GatewayError),
}

/// The chat/embedding client. Immutable after construction; calls may be
/// issued from many threads.
pub struct Gateway {
    config: ProviderConfig,
    fixtures: FixtureStore,
    client: Option<reqwest::blocking::Client>,
    embed_dim: Mutex<Option<usize>>,
}

impl Gateway {
    pub fn new(config: ProviderConfig) -> Result<Self, GatewayError> {
        let client = match config.mode {
            Mode::Replay => None,
            Mode::Live | Mode::Record => Some(
                reqwest::blocking::Client::builder()
                    .timeout(config.timeout)
                    .build()
                    .map_err(|e| GatewayError::Transport {
                        attempts: 0,
                        message: format!("client construction failed: {e}"),
                    })?,
            ),
        };
        let fixtures = FixtureStore::new(config.fixture_dir.clone());
        Ok(Gateway {
            config,
            fixtures,
            client,
            embed_dim: Mutex::new(None),
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn fixtures(&self) -> &FixtureStore {
        &self.fixtures
    }

    /// Hash under which this chat request is stored and replayed.
    pub fn chat_hash(request: &ChatRequest) -> String {
        hash_value(&canonical_chat(request))
    }

    /// Send one chat request and return the assistant text.
    pub fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        request.validate()?;
        let canonical = canonical_chat(request);
        let hash = hash_value(&canonical);
        match self.config.mode {
            Mode::Replay => match self.fixtures.get(&hash)? {
                Some(stored) => chat_text_from_fixture(&stored, &hash),
                None => Err(GatewayError::FixtureMiss { hash }),
            },
            Mode::Live => self.chat_remote(request),
            Mode::Record => {
                if let Some(stored) = self.fixtures.get(&hash)? {
                    return chat_text_from_fixture(&stored, &hash);
                }
                let text = self.chat_remote(request)?;
                self.fixtures.put(&hash, &canonical, &json!({ "text": text }))?;
                Ok(text)
            }
        }
    }

    /// Issue many chat requests with at most `in_flight` concurrent calls.
    /// Results come back in input order.
    pub fn chat_many(&self, requests: &[ChatRequest]) -> Vec<Result<String, GatewayError>> {
        let limit = self.config.in_flight.max(1).min(requests.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<String, GatewayError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..limit {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= requests.len() {
                        break;
                    }
                    let result = self.chat(&requests[i]);
                    *slots[i].lock().expect("slot lock") = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|slot| slot.into_inner().expect("slot lock").expect("slot filled"))
            .collect()
    }

    /// Embed a batch of texts, enforcing one dimension across the session.
    pub fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, GatewayError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let canonical = canonical_embed(&self.config.embed_model, texts);
        let hash = hash_value(&canonical);
        let vectors = match self.config.mode {
            Mode::Replay => match self.fixtures.get(&hash)? {
                Some(stored) => vectors_from_fixture(&stored, &hash)?,
                None => return Err(GatewayError::FixtureMiss { hash }),
            },
            Mode::Live => self.embed_remote(texts)?,
            Mode::Record => match self.fixtures.get(&hash)? {
                Some(stored) => vectors_from_fixture(&stored, &hash)?,
                None => {
                    let vectors = self.embed_remote(texts)?;
                    self.fixtures
                        .put(&hash, &canonical, &json!({ "vectors": vectors }))?;
                    vectors
                }
            },
        };
        self.check_vectors(texts.len(), &vectors)?;
        Ok(vectors)
    }

    fn check_vectors(&self, expected: usize, vectors: &[Vec<f32>]) -> Result<(), GatewayError> {
        if vectors.len() != expected {
            return Err(GatewayError::MalformedResponse(format!(
                "expected {expected} vectors, got {}",
                vectors.len()
            )));
        }
        let dim = vectors[0].len();
        for v in vectors {
            if v.len() != dim {
                return Err(GatewayError::EmbedDim {
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        let mut session = self.embed_dim.lock().expect("dim lock");
        match *session {
            Some(expected_dim) if expected_dim != dim => Err(GatewayError::EmbedDim {
                expected: expected_dim,
                got: dim,
            }),
            _ => {
                *session = Some(dim);
                Ok(())
            }
        }
    }

    fn client(&self) -> Result<&reqwest::blocking::Client, GatewayError> {
        self.client.as_ref().ok_or(GatewayError::Transport {
            attempts: 0,
            message: "no network client in replay mode".into(),
        })
    }

    fn api_key(&self) -> Result<&str, GatewayError> {
        self.config
            .api_key
            .as_deref()
            .ok_or(GatewayError::MissingApiKey)
    }

    fn with_retries<T>(
        &self,
        mut attempt: impl FnMut() -> Attempt<T>,
    ) -> Result<T, GatewayError> {
        let delays = backoff_delays(self.config.backoff_base_ms, self.config.max_retries);
        let mut last = String::new();
        for i in 0..=self.config.max_retries {
            if i > 0 {
                std::thread::sleep(delays[(i - 1) as usize]);
            }
            match attempt() {
                Attempt::Ok(t) => return Ok(t),
                Attempt::Retry(message) => last = message,
                Attempt::Fatal(e) => return Err(e),
            }
        }
        Err(GatewayError::Transport {
            attempts: self.config.max_retries + 1,
            message: last,
        })
    }

    fn post_json(&self, path: &str, body: &Value) -> Attempt<Value> {
        let client = match self.client() {
            Ok(c) => c,
            Err(e) => return Attempt::Fatal(e),
        };
        let key = match self.api_key() {
            Ok(k) => k,
            Err(e) => return Attempt::Fatal(e),
        };
        let url = format!("{}{}", self.config.base_url.trim_end_matches('/'), path);
        let response = match client.post(url).bearer_auth(key).json(body).send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Retry(format!("status {}", status.as_u16()));
        }
        if !status.is_success() {
            let message = response.text().unwrap_or_default();
            return Attempt::Fatal(GatewayError::Api {
                status: status.as_u16(),
                message: truncate(&message, 300),
            });
        }
        match response.json::<Value>() {
            Ok(v) => Attempt::Ok(v),
            Err(e) => Attempt::Fatal(GatewayError::MalformedResponse(e.to_string())),
        }
    }

    fn chat_remote(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let mut messages = Vec::new();
        if let Some(system) = &request.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        for m in &request.messages {
            messages.push(json!({"role": m.role, "content": m.content}));
        }
        let body = json!({
            "model": request.model,
            "messages": messages,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        });
        let value = self.with_retries(|| self.post_json("/chat/completions", &body))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| {
                GatewayError::MalformedResponse(
                    "missing choices[0].message.content".to_string(),
                )
            })
    }

    fn embed_remote(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, GatewayError> {
        let body = json!({
            "model": self.config.embed_model,
            "input": texts,
        });
        let value = self.with_retries(|| self.post_json("/embeddings", &body))?;
        let data = value
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::MalformedResponse("missing data array".to_string()))?;
        let mut rows: Vec<(usize, Vec<f32>)> = Vec::with_capacity(data.len());
        for (fallback_index, item) in data.iter().enumerate() {
            let index = item
                .get("index")
                .and_then(Value::as_u64)
                .map(|i| i as usize)
                .unwrap_or(fallback_index);
            let embedding = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| {
                    GatewayError::MalformedResponse("missing embedding field".to_string())
                })?;
            let row: Result<Vec<f32>, GatewayError> = embedding
                .iter()
                .map(|x| {
                    x.as_f64().map(|v| v as f32).ok_or_else(|| {
                        GatewayError::MalformedResponse("non-numeric embedding".to_string())
                    })
                })
                .collect();
            rows.push((index, row?));
        }
        rows.sort_by_key(|(i, _)| *i);
        Ok(rows.into_iter().map(|(_, v)| v).collect())
    }
}

fn truncate(s: &str, max: usize) -> String {
    if s.len() <= max {
        s.to_string()
    } else {
        let mut end = max;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &s[..end])
    }
}

fn chat_text_from_fixture(stored: &Value, hash: &str) -> Result<String, GatewayError> {
    stored
        .get("text")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| GatewayError::Fixture {
            path: format!("{hash}.json"),
            message: "chat fixture missing \"text\"".to_string(),
        })
}

fn vectors_from_fixture(stored: &Value, hash: &str) -> Result<Vec<Vec<f32>>, GatewayError> {
    let rows = stored
        .get("vectors")
        .and_then(Value::as_array)
        .ok_or_else(|| GatewayError::Fixture {
            path: format!("{hash}.json"),
            message: "embed fixture missing \"vectors\"".to_string(),
        })?;
    rows.iter()
        .map(|row| {
            row.as_array()
                .ok_or_else(|| GatewayError::Fixture {
                    path: format!("{hash}.json"),
                    message: "vector row is not an array".to_string(),
                })?
                .iter()
                .map(|x| {
                    x.as_f64().map(|v| v as f32).ok_or_else(|| GatewayError::Fixture {
                        path: format!("{hash}.json"),
                        message: "non-numeric vector component".to_string(),
                    })
                })
                .collect()
        })
        .collect()
}

/// [`EmbeddingProvider`] backed by a shared [`Gateway`].
pub struct GatewayEmbeddingProvider {
    pub gateway: Arc<Gateway>,
}

impl EmbeddingProvider for GatewayEmbeddingProvider {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        self.gateway.embed(texts).map_err(|source| EmbedError::Gateway {
            provider: self.name().to_string(),
            source,
        })
    }

    fn name(&self) -> &str {
        "remote"
    }
}

/// True when the error chain bottoms out in a transport failure; used to pick
/// the process exit code.
pub fn is_transport_error(err: &(dyn std::error::Error + 'static)) -> bool {
    let mut current: Option<&(dyn std::error::Error + 'static)> = Some(err);
    while let Some(e) = current {
        if let Some(g) = e.downcast_ref::<GatewayError>() {
            if matches!(g, GatewayError::Transport { .. }) {
                return true;
            }
        }
        current = e.source();
    }
    false
}
