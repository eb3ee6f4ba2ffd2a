//! Querying model backends, with telemetry and a record/replay transcript
//! store.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::prompting::RenderedPrompt;

pub const LOCAL_ENDPOINT: &str = "http://localhost:11434/v1/chat/completions";

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Temperature {
    #[default]
    ProviderDefault,
    Value(f64),
}

impl Temperature {
    pub fn value(self) -> Option<f64> {
        match self {
            Temperature::ProviderDefault => None,
            Temperature::Value(t) => Some(t),
        }
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Temperature::ProviderDefault => f.write_str("provider-default"),
            Temperature::Value(t) => write!(f, "{t:?}"),
        }
    }
}

impl std::str::FromStr for Temperature {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "provider-default" || s == "default" {
            return Ok(Temperature::ProviderDefault);
        }
        let t: f64 = s.parse().map_err(|_| format!("bad temperature `{s}`"))?;
        if !(0.0..=1.0).contains(&t) {
            return Err(format!("temperature {t} outside [0, 1]"));
        }
        Ok(Temperature::Value(t))
    }
}

impl Serialize for Temperature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Temperature::ProviderDefault => s.serialize_str("provider-default"),
            Temperature::Value(t) => s.serialize_f64(*t),
        }
    }
}

impl<'de> Deserialize<'de> for Temperature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(f64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(t) if (0.0..=1.0).contains(&t) => Ok(Temperature::Value(t)),
            Raw::N(t) => Err(serde::de::Error::custom(format!("temperature {t} outside [0, 1]"))),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Price per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Price {
    pub input_per_mtok: f64,
    pub output_per_mtok: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub name: String,
    /// URL of a chat-completion endpoint, `local`, `mock`, or `replay`.
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub auth: Option<String>,
    /// Model identifier sent on the wire; defaults to `name`.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub temperature: Temperature,
    #[serde(default = "default_attempts")]
    pub max_attempts_per_call: u32,
    #[serde(default = "default_timeout", with = "duration_secs")]
    pub timeout: Duration,
    #[serde(default = "default_backoff", with = "duration_secs")]
    pub backoff_base: Duration,
    #[serde(default)]
    pub price: Option<Price>,
    /// Passed through verbatim as `reasoning_effort` when set.
    #[serde(default)]
    pub reasoning_effort: Option<String>,
}

fn default_attempts() -> u32 {
    3
}
fn default_timeout() -> Duration {
    Duration::from_secs(300)
}
fn default_backoff() -> Duration {
    Duration::from_millis(500)
}

impl BackendConfig {
    pub fn new(name: impl Into<String>, endpoint: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            endpoint: endpoint.into(),
            auth: None,
            model: None,
            temperature: Temperature::ProviderDefault,
            max_attempts_per_call: default_attempts(),
            timeout: default_timeout(),
            backoff_base: default_backoff(),
            price: None,
            reasoning_effort: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Temperature::Value(t) = self.temperature {
            if !(0.0..=1.0).contains(&t) {
                return Err(format!("{}: temperature {t} outside [0, 1]", self.name));
            }
        }
        if self.timeout.is_zero() {
            return Err(format!("{}: timeout must be positive", self.name));
        }
        if self.max_attempts_per_call == 0 {
            return Err(format!("{}: max_attempts_per_call must be >= 1", self.name));
        }
        Ok(())
    }

    /// Backend identity used in keys: the name, plus `@t=<T>` for a numeric
    /// temperature.
    pub fn key_name(&self) -> String {
        match self.temperature {
            Temperature::ProviderDefault => self.name.clone(),
            Temperature::Value(t) => format!("{}@t={t:?}", self.name),
        }
    }

    pub fn is_remote(&self) -> bool {
        self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")
    }

    pub fn url(&self) -> &str {
        if self.endpoint == "local" {
            LOCAL_ENDPOINT
        } else {
            &self.endpoint
        }
    }

    pub fn with_temperature(&self, t: Temperature) -> Self {
        Self { temperature: t, ..self.clone() }
    }
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(serde::de::Error::custom("duration must be a non-negative number of seconds"));
        }
        Ok(Duration::from_secs_f64(v))
    }
}

mod duration_us {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_micros(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawModelResponse {
    pub text: String,
    /// Wall-clock latency, stored in microseconds.
    #[serde(rename = "latency_us", with = "duration_us")]
    pub latency: Duration,
    pub tokens_in: Option<u64>,
    pub tokens_out: Option<u64>,
    pub tokens_reasoning: Option<u64>,
    pub cost_estimate: Option<f64>,
    pub attempt_index: u32,
    pub backend_name: String,
    pub created_at: DateTime<Utc>,
}

/// Per-call numbers copied into assessment outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Telemetry {
    pub latency_us: u64,
    pub tokens_in: Option<u64>,
    pub tokens_out: Option<u64>,
    pub tokens_reasoning: Option<u64>,
    pub cost: Option<f64>,
}

impl RawModelResponse {
    pub fn telemetry(&self) -> Telemetry {
        Telemetry {
            latency_us: self.latency.as_micros() as u64,
            tokens_in: self.tokens_in,
            tokens_out: self.tokens_out,
            tokens_reasoning: self.tokens_reasoning,
            cost: self.cost_estimate,
        }
    }
}

/// Identity of one model call.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TranscriptKey {
    pub backend: String,
    pub instance_id: String,
    pub variant_tag: Option<String>,
    pub attempt_index: u32,
    pub prompt_hash: String,
}

impl TranscriptKey {
    pub fn new(cfg: &BackendConfig, prompt: &RenderedPrompt, attempt_index: u32) -> Self {
        Self {
            backend: cfg.key_name(),
            instance_id: prompt.instance_id.clone(),
            variant_tag: prompt.variant_tag.clone(),
            attempt_index,
            prompt_hash: prompt.hash(),
        }
    }
}

impl fmt::Display for TranscriptKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/#{}/{}",
            self.backend,
            self.instance_id,
            self.variant_tag.as_deref().unwrap_or("-"),
            self.attempt_index,
            &self.prompt_hash[..self.prompt_hash.len().min(12)]
        )
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("{key}: credential variable `{var}` is not set")]
    AuthMissing { var: String, key: Box<TranscriptKey> },
    #[error("{key}: request timed out")]
    Timeout { key: Box<TranscriptKey> },
    #[error("{key}: transport failure: {detail}")]
    TransportFailure { key: Box<TranscriptKey>, detail: String },
    #[error("{key}: provider refused: {detail}")]
    ProviderRefusal { key: Box<TranscriptKey>, detail: String },
    #[error("{key}: already recorded")]
    DuplicateKey { key: Box<TranscriptKey> },
    #[error("{key}: not in transcript store and no live backend")]
    ReplayMiss { key: Box<TranscriptKey> },
    #[error("transcript store {path}: {detail}")]
    Store { path: String, detail: String },
}

impl ClientError {
    pub fn key(&self) -> Option<&TranscriptKey> {
        match self {
            ClientError::AuthMissing { key, .. }
            | ClientError::Timeout { key }
            | ClientError::TransportFailure { key, .. }
            | ClientError::ProviderRefusal { key, .. }
            | ClientError::DuplicateKey { key }
            | ClientError::ReplayMiss { key } => Some(key.as_ref()),
            ClientError::Store { .. } => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ClientError::AuthMissing { .. } => "AuthMissing",
            ClientError::Timeout { .. } => "Timeout",
            ClientError::TransportFailure { .. } => "TransportFailure",
            ClientError::ProviderRefusal { .. } => "ProviderRefusal",
            ClientError::DuplicateKey { .. } => "DuplicateKey",
            ClientError::ReplayMiss { .. } => "ReplayMiss",
            ClientError::Store { .. } => "Store",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct StoreLine {
    key: TranscriptKey,
    response: RawModelResponse,
}

/// Keyed model responses persisted as JSON lines. Later lines for the same
/// key win, which is how overwrites are stored.
#[derive(Debug, Default)]
pub struct TranscriptStore {
    path: Option<PathBuf>,
    inner: Mutex<StoreInner>,
}

#[derive(Debug, Default)]
struct StoreInner {
    records: HashMap<TranscriptKey, RawModelResponse>,
    file: Option<File>,
}

impl TranscriptStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a store file and loads its records.
    pub fn open(path: &Path) -> Result<Self, ClientError> {
        let err = |detail: String| ClientError::Store { path: path.display().to_string(), detail };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| err(e.to_string()))?;
        }
        let mut records = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(|e| err(e.to_string()))?);
            for (n, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| err(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: StoreLine =
                    serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", n + 1)))?;
                records.insert(rec.key, rec.response);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| err(e.to_string()))?;
        Ok(Self { path: Some(path.to_path_buf()), inner: Mutex::new(StoreInner { records, file: Some(file) }) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &TranscriptKey) -> Option<RawModelResponse> {
        self.inner.lock().unwrap().records.get(key).cloned()
    }

    pub fn contains(&self, key: &TranscriptKey) -> bool {
        self.inner.lock().unwrap().records.contains_key(key)
    }

    pub fn keys(&self) -> Vec<TranscriptKey> {
        let mut k: Vec<_> = self.inner.lock().unwrap().records.keys().cloned().collect();
        k.sort();
        k
    }

    pub fn record(&self, key: TranscriptKey, resp: RawModelResponse, overwrite: bool) -> Result<(), ClientError> {
        let mut inner = self.inner.lock().unwrap();
        if !overwrite && inner.records.contains_key(&key) {
            return Err(ClientError::DuplicateKey { key: Box::new(key) });
        }
        if let Some(file) = inner.file.as_mut() {
            let line = serde_json::to_string(&StoreLine { key: key.clone(), response: resp.clone() })
                .expect("records serialize");
            writeln!(file, "{line}")
                .and_then(|_| file.flush())
                .map_err(|e| ClientError::Store { path: self.path_string(), detail: e.to_string() })?;
        }
        inner.records.insert(key, resp);
        Ok(())
    }

    /// Adds a response pasted by hand (e.g. from a web chat interface).
    /// Latency and token counts are unknown and left empty.
    pub fn import_manual(&self, key: TranscriptKey, text: String, overwrite: bool) -> Result<(), ClientError> {
        let resp = RawModelResponse {
            text,
            latency: Duration::ZERO,
            tokens_in: None,
            tokens_out: None,
            tokens_reasoning: None,
            cost_estimate: None,
            attempt_index: key.attempt_index,
            backend_name: key.backend.clone(),
            created_at: Utc::now(),
        };
        self.record(key, resp, overwrite)
    }

    fn path_string(&self) -> String {
        self.path.as_ref().map_or_else(|| "<memory>".into(), |p| p.display().to_string())
    }
}

/// Text plus token counts returned by a single successful call.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Completion {
    pub text: String,
    pub tokens_in: Option<u64>,
    pub tokens_out: Option<u64>,
    pub tokens_reasoning: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CallError {
    /// Worth retrying.
    Transport(String),
    Timeout,
    Refusal(String),
}

pub trait Backend: Send + Sync {
    fn call(&self, cfg: &BackendConfig, prompt: &RenderedPrompt, attempt_index: u32) -> Result<Completion, CallError>;
}

type Responder = dyn Fn(&RenderedPrompt, u32) -> String + Send + Sync;

/// Backend answering from a function of the prompt and attempt index.
pub struct MockBackend {
    respond: Box<Responder>,
}

impl MockBackend {
    pub fn fixed(text: impl Into<String>) -> Self {
        let text = text.into();
        Self { respond: Box::new(move |_, _| text.clone()) }
    }

    pub fn from_fn(f: impl Fn(&RenderedPrompt, u32) -> String + Send + Sync + 'static) -> Self {
        Self { respond: Box::new(f) }
    }
}

impl Backend for MockBackend {
    fn call(&self, _cfg: &BackendConfig, prompt: &RenderedPrompt, attempt_index: u32) -> Result<Completion, CallError> {
        let text = (self.respond)(prompt, attempt_index);
        Ok(Completion {
            tokens_in: Some(prompt.text.split_whitespace().count() as u64),
            tokens_out: Some(text.split_whitespace().count() as u64),
            tokens_reasoning: None,
            text,
        })
    }
}

/// Backend that is never reachable; used for replay-only runs.
pub struct OfflineBackend;

impl Backend for OfflineBackend {
    fn call(&self, _cfg: &BackendConfig, _p: &RenderedPrompt, _a: u32) -> Result<Completion, CallError> {
        Err(CallError::Transport("offline".into()))
    }
}

/// OpenAI-style chat-completion endpoint over HTTPS.
pub struct ChatCompletionBackend {
    http: reqwest::blocking::Client,
}

impl ChatCompletionBackend {
    pub fn new(timeout: Duration) -> Result<Self, String> {
        let http = reqwest::blocking::Client::builder().timeout(timeout).build().map_err(|e| e.to_string())?;
        Ok(Self { http })
    }
}

pub fn chat_request_body(cfg: &BackendConfig, prompt: &str) -> serde_json::Value {
    let mut body = serde_json::json!({
        "model": cfg.model.as_deref().unwrap_or(&cfg.name),
        "messages": [{ "role": "user", "content": prompt }],
    });
    if let Some(t) = cfg.temperature.value() {
        body["temperature"] = t.into();
    }
    if let Some(effort) = &cfg.reasoning_effort {
        body["reasoning_effort"] = effort.clone().into();
    }
    body
}

pub fn parse_chat_response(v: &serde_json::Value) -> Result<Completion, CallError> {
    let choice = &v["choices"][0];
    if choice["finish_reason"] == "content_filter" {
        return Err(CallError::Refusal("content_filter".into()));
    }
    if let Some(refusal) = choice["message"]["refusal"].as_str() {
        return Err(CallError::Refusal(refusal.to_string()));
    }
    let text = choice["message"]["content"]
        .as_str()
        .ok_or_else(|| CallError::Transport("response lacks choices[0].message.content".into()))?;
    let usage = &v["usage"];
    Ok(Completion {
        text: text.to_string(),
        tokens_in: usage["prompt_tokens"].as_u64(),
        tokens_out: usage["completion_tokens"].as_u64(),
        tokens_reasoning: usage["completion_tokens_details"]["reasoning_tokens"].as_u64(),
    })
}

impl Backend for ChatCompletionBackend {
    fn call(&self, cfg: &BackendConfig, prompt: &RenderedPrompt, _attempt: u32) -> Result<Completion, CallError> {
        let mut req = self.http.post(cfg.url()).timeout(cfg.timeout).json(&chat_request_body(cfg, &prompt.text));
        if let Some(var) = &cfg.auth {
            if let Ok(token) = std::env::var(var) {
                req = req.bearer_auth(token);
            }
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                CallError::Timeout
            } else {
                CallError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        let body: serde_json::Value = resp.json().map_err(|e| {
            if e.is_timeout() {
                CallError::Timeout
            } else {
                CallError::Transport(format!("{status}: {e}"))
            }
        })?;
        if status.is_success() {
            parse_chat_response(&body)
        } else if status.as_u16() == 429 || status.is_server_error() {
            Err(CallError::Transport(format!("{status}: {body}")))
        } else {
            Err(CallError::Refusal(format!("{status}: {body}")))
        }
    }
}

/// Where responses come from and whether they are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreMode {
    /// Always call the backend; nothing is stored.
    Live,
    /// Serve from the store, fail on a miss.
    Replay,
    /// Call the backend and store the result.
    Record,
    /// Serve from the store; call and store on a miss.
    ReplayOrRecord,
}

pub struct ModelClient {
    pub cfg: BackendConfig,
    backend: Arc<dyn Backend>,
    store: Option<Arc<TranscriptStore>>,
    mode: StoreMode,
}

impl ModelClient {
    pub fn new(cfg: BackendConfig, backend: Arc<dyn Backend>) -> Self {
        Self { cfg, backend, store: None, mode: StoreMode::Live }
    }

    pub fn with_store(mut self, store: Arc<TranscriptStore>, mode: StoreMode) -> Self {
        self.store = Some(store);
        self.mode = mode;
        self
    }

    pub fn store(&self) -> Option<&Arc<TranscriptStore>> {
        self.store.as_ref()
    }

    pub fn key(&self, prompt: &RenderedPrompt, attempt_index: u32) -> TranscriptKey {
        TranscriptKey::new(&self.cfg, prompt, attempt_index)
    }

    /// One query. Replayed responses are returned exactly as recorded.
    pub fn query(&self, prompt: &RenderedPrompt, attempt_index: u32) -> Result<RawModelResponse, ClientError> {
        assert!(attempt_index >= 1, "attempt indices start at 1");
        let key = self.key(prompt, attempt_index);
        if matches!(self.mode, StoreMode::Replay | StoreMode::ReplayOrRecord) {
            if let Some(r) = self.store.as_ref().and_then(|s| s.get(&key)) {
                return Ok(r);
            }
            if self.mode == StoreMode::Replay {
                return Err(ClientError::ReplayMiss { key: Box::new(key) });
            }
        }
        let resp = query_backend(&self.cfg, self.backend.as_ref(), prompt, attempt_index, &key)?;
        if matches!(self.mode, StoreMode::Record | StoreMode::ReplayOrRecord) {
            if let Some(store) = &self.store {
                store.record(key, resp.clone(), self.mode == StoreMode::Record)?;
            }
        }
        Ok(resp)
    }
}

/// Calls the backend with retries and exponential backoff on transport
/// failures and timeouts.
pub fn query_backend(
    cfg: &BackendConfig,
    backend: &dyn Backend,
    prompt: &RenderedPrompt,
    attempt_index: u32,
    key: &TranscriptKey,
) -> Result<RawModelResponse, ClientError> {
    if cfg.is_remote() {
        if let Some(var) = &cfg.auth {
            if std::env::var(var).map_or(true, |v| v.is_empty()) {
                return Err(ClientError::AuthMissing { var: var.clone(), key: Box::new(key.clone()) });
            }
        }
    }
    let mut last = CallError::Transport("no attempt made".into());
    for i in 0..cfg.max_attempts_per_call {
        if i > 0 {
            std::thread::sleep(cfg.backoff_base * 2u32.saturating_pow(i - 1));
        }
        let start = Instant::now();
        match backend.call(cfg, prompt, attempt_index) {
            Ok(c) => {
                let latency = start.elapsed();
                let cost_estimate = cfg.price.and_then(|p| {
                    let (i, o) = (c.tokens_in?, c.tokens_out? + c.tokens_reasoning.unwrap_or(0));
                    Some((i as f64 * p.input_per_mtok + o as f64 * p.output_per_mtok) / 1e6)
                });
                return Ok(RawModelResponse {
                    text: c.text,
                    latency,
                    tokens_in: c.tokens_in,
                    tokens_out: c.tokens_out,
                    tokens_reasoning: c.tokens_reasoning,
                    cost_estimate,
                    attempt_index,
                    backend_name: cfg.key_name(),
                    created_at: Utc::now(),
                });
            }
            Err(CallError::Refusal(detail)) => {
                return Err(ClientError::ProviderRefusal { key: Box::new(key.clone()), detail });
            }
            Err(e) => {
                log::warn!("{key}: call {} of {} failed: {e:?}", i + 1, cfg.max_attempts_per_call);
                last = e;
            }
        }
    }
    Err(match last {
        CallError::Timeout => ClientError::Timeout { key: Box::new(key.clone()) },
        CallError::Transport(detail) | CallError::Refusal(detail) => {
            ClientError::TransportFailure { key: Box::new(key.clone()), detail }
        }
    })
}
