//! Chat-completion providers: an OpenAI-compatible HTTP client, a scripted
//! stand-in for tests, and cassette recording and replay.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{debug, warn};

pub const ENV_API_KEY: &str = "PPC_API_KEY";
pub const ENV_BASE_URL: &str = "PPC_BASE_URL";
pub const ENV_MODEL: &str = "PPC_MODEL";

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_MODEL: &str = "gpt-4o-mini";
pub const BACKOFF_BASE: Duration = Duration::from_millis(500);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("request timed out")]
    Timeout,
    #[error("rate limited (retry after {retry_after_ms:?} ms)")]
    RateLimited { retry_after_ms: Option<u64> },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("cassette exhausted after {0} exchange(s)")]
    CassetteExhausted(usize),
    #[error("scripted provider has no reply left for call {0}")]
    ScriptExhausted(usize),
    #[error("io error: {0}")]
    Io(String),
}

impl LlmError {
    fn is_transient(&self) -> bool {
        matches!(self, LlmError::Timeout | LlmError::RateLimited { .. } | LlmError::Transport(_))
            || matches!(self, LlmError::Http { status, .. } if *status >= 500)
    }
}

impl From<std::io::Error> for LlmError {
    fn from(e: std::io::Error) -> Self {
        LlmError::Io(e.to_string())
    }
}

/// Anything that turns a conversation into the next assistant message.
pub trait ChatProvider: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError>;
    fn model_name(&self) -> &str;
}

impl<P: ChatProvider + ?Sized> ChatProvider for Box<P> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        (**self).complete(messages)
    }
    fn model_name(&self) -> &str {
        (**self).model_name()
    }
}

impl<P: ChatProvider + ?Sized> ChatProvider for Arc<P> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        (**self).complete(messages)
    }
    fn model_name(&self) -> &str {
        (**self).model_name()
    }
}

/// Non-empty, ends with a user message, no blank user or assistant content.
pub fn check_messages(messages: &[ChatMessage]) -> Result<(), LlmError> {
    let last = messages.last().ok_or_else(|| LlmError::Precondition("empty message list".into()))?;
    if last.role != Role::User {
        return Err(LlmError::Precondition(format!("last message has role {}, expected user", last.role.as_str())));
    }
    if let Some(i) = messages.iter().position(|m| m.role != Role::System && m.content.trim().is_empty()) {
        return Err(LlmError::Precondition(format!("message {i} has empty content")));
    }
    Ok(())
}

/// The request body, with keys in sorted order so its serialization is
/// canonical.
pub fn request_body(model: &str, messages: &[ChatMessage]) -> Value {
    let msgs: Vec<Value> = messages.iter().map(|m| json!({"content": m.content, "role": m.role.as_str()})).collect();
    json!({"messages": msgs, "model": model})
}

/// Lowercase hex SHA-256 of the canonical request body.
pub fn request_digest(model: &str, messages: &[ChatMessage]) -> String {
    let canonical = serde_json::to_string(&request_body(model, messages)).expect("json values serialize");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the key, never the key.
    pub api_key_ref: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_BASE_URL.into(),
            model: DEFAULT_MODEL.into(),
            api_key_ref: ENV_API_KEY.into(),
            timeout_ms: 60_000,
            max_retries: 3,
        }
    }
}

impl ProviderConfig {
    /// Defaults overridden by `PPC_BASE_URL` and `PPC_MODEL`.
    pub fn from_env() -> Self {
        let mut c = Self::default();
        if let Ok(url) = std::env::var(ENV_BASE_URL) {
            c.base_url = url;
        }
        if let Ok(model) = std::env::var(ENV_MODEL) {
            c.model = model;
        }
        c
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.timeout_ms == 0 {
            return Err(LlmError::Precondition("timeout_ms must be positive".into()));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    /// Delay before retry number `attempt` (0-based).
    pub fn backoff(attempt: u32) -> Duration {
        BACKOFF_BASE * 2u32.saturating_pow(attempt.min(16))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportResponse {
    pub status: u16,
    pub body: String,
    pub retry_after_ms: Option<u64>,
}

/// One HTTP POST with a JSON body. Swappable so retry logic is testable.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
        timeout: Duration,
    ) -> Result<TransportResponse, LlmError>;
}

#[derive(Debug, Default)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
        timeout: Duration,
    ) -> Result<TransportResponse, LlmError> {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        let mut req = agent.post(url);
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let mut resp = req.send_json(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => LlmError::Timeout,
            other => LlmError::Transport(other.to_string()),
        })?;
        let retry_after_ms = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(|s| s * 1000);
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => LlmError::Timeout,
            other => LlmError::Transport(other.to_string()),
        })?;
        Ok(TransportResponse { status, body, retry_after_ms })
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// OpenAI-compatible chat-completions client with retry and backoff.
pub struct HttpProvider {
    config: ProviderConfig,
    api_key: Option<String>,
    transport: Box<dyn Transport>,
    sleeper: Sleeper,
}

impl HttpProvider {
    /// Reads the key from the variable named by `config.api_key_ref`.
    pub fn new(config: ProviderConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_ref).ok().filter(|k| !k.is_empty());
        Ok(Self { config, api_key, transport: Box::new(UreqTransport), sleeper: Arc::new(std::thread::sleep) })
    }

    pub fn with_transport(mut self, transport: impl Transport + 'static) -> Self {
        self.transport = Box::new(transport);
        self
    }

    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn attempt(&self, body: &Value) -> Result<String, LlmError> {
        let mut headers = vec![("Content-Type".to_string(), "application/json".to_string())];
        if let Some(key) = &self.api_key {
            headers.push(("Authorization".to_string(), format!("Bearer {key}")));
        }
        let timeout = Duration::from_millis(self.config.timeout_ms);
        let resp = self.transport.post_json(&self.config.endpoint(), &headers, body, timeout)?;
        match resp.status {
            200..=299 => parse_completion(&resp.body),
            401 | 403 => Err(LlmError::Auth(format!("HTTP {}", resp.status))),
            408 => Err(LlmError::Timeout),
            429 => Err(LlmError::RateLimited { retry_after_ms: resp.retry_after_ms }),
            status => Err(LlmError::Http { status, body: resp.body.chars().take(500).collect() }),
        }
    }
}

fn parse_completion(body: &str) -> Result<String, LlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::MalformedResponse("missing choices[0].message.content".into()))
}

impl ChatProvider for HttpProvider {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        check_messages(messages)?;
        let body = request_body(&self.config.model, messages);
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_transient() && attempt < self.config.max_retries => {
                    let mut delay = ProviderConfig::backoff(attempt);
                    if let LlmError::RateLimited { retry_after_ms: Some(ms) } = e {
                        delay = delay.max(Duration::from_millis(ms));
                    }
                    debug!(attempt, ?delay, error = %e, "retrying chat completion");
                    (self.sleeper)(delay);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn model_name(&self) -> &str {
        &self.config.model
    }
}

/// Returns queued replies in order and remembers every request.
#[derive(Default)]
pub struct ScriptedProvider {
    queue: Mutex<VecDeque<Result<String, LlmError>>>,
    calls: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ScriptedProvider {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::from_results(replies.into_iter().map(|r| Ok(r.into())))
    }

    pub fn from_results(results: impl IntoIterator<Item = Result<String, LlmError>>) -> Self {
        Self { queue: Mutex::new(results.into_iter().collect()), calls: Mutex::default() }
    }

    pub fn push(&self, reply: Result<String, LlmError>) {
        self.queue.lock().unwrap().push_back(reply);
    }

    pub fn calls(&self) -> Vec<Vec<ChatMessage>> {
        self.calls.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        check_messages(messages)?;
        let mut calls = self.calls.lock().unwrap();
        calls.push(messages.to_vec());
        let n = calls.len();
        drop(calls);
        self.queue.lock().unwrap().pop_front().unwrap_or(Err(LlmError::ScriptExhausted(n - 1)))
    }

    fn model_name(&self) -> &str {
        "scripted"
    }
}

pub const CASSETTE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub index: usize,
    pub request_digest: String,
    pub response_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cassette {
    pub version: u32,
    pub exchanges: Vec<Exchange>,
}

impl Default for Cassette {
    fn default() -> Self {
        Self { version: CASSETTE_VERSION, exchanges: Vec::new() }
    }
}

impl Cassette {
    /// Builds a cassette from bare replies (digests left empty).
    pub fn from_responses<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        let exchanges = responses
            .into_iter()
            .enumerate()
            .map(|(index, r)| Exchange { index, request_digest: String::new(), response_text: r.into() })
            .collect();
        Self { version: CASSETTE_VERSION, exchanges }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.version != CASSETTE_VERSION {
            return Err(LlmError::Precondition(format!("unsupported cassette version {}", self.version)));
        }
        if let Some(bad) = self.exchanges.iter().enumerate().find(|(i, e)| e.index != *i) {
            return Err(LlmError::Precondition(format!("cassette index {} found at position {}", bad.1.index, bad.0)));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path)?;
        let c: Cassette =
            serde_json::from_str(&text).map_err(|e| LlmError::Precondition(format!("{}: {e}", path.display())))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("cassette serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), LlmError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_json())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

/// Wraps a provider and appends each successful exchange to a cassette file.
pub struct RecordingProvider<P> {
    inner: P,
    path: PathBuf,
    cassette: Mutex<Cassette>,
}

/// Starts a fresh cassette at `path`, failing early when it is not writable.
pub fn record<P: ChatProvider>(inner: P, path: impl Into<PathBuf>) -> Result<RecordingProvider<P>, LlmError> {
    let path = path.into();
    let cassette = Cassette::default();
    cassette.save(&path)?;
    Ok(RecordingProvider { inner, path, cassette: Mutex::new(cassette) })
}

impl<P> RecordingProvider<P> {
    pub fn cassette(&self) -> Cassette {
        self.cassette.lock().unwrap().clone()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn into_inner(self) -> P {
        self.inner
    }
}

impl<P: ChatProvider> ChatProvider for RecordingProvider<P> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        // Holding the lock across the call keeps cassette order equal to
        // call order.
        let mut cassette = self.cassette.lock().unwrap();
        let reply = self.inner.complete(messages)?;
        let index = cassette.exchanges.len();
        cassette.exchanges.push(Exchange {
            index,
            request_digest: request_digest(self.inner.model_name(), messages),
            response_text: reply.clone(),
        });
        cassette.save(&self.path)?;
        Ok(reply)
    }

    fn model_name(&self) -> &str {
        self.inner.model_name()
    }
}

/// Serves cassette replies strictly in index order.
pub struct ReplayProvider {
    cassette: Cassette,
    model: String,
    cursor: Mutex<usize>,
    warnings: Mutex<Vec<String>>,
}

pub fn replay(cassette: Cassette) -> Result<ReplayProvider, LlmError> {
    cassette.validate()?;
    Ok(ReplayProvider { cassette, model: DEFAULT_MODEL.into(), cursor: Mutex::new(0), warnings: Mutex::default() })
}

impl ReplayProvider {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        replay(Cassette::load(path)?)
    }

    /// Model name used when recomputing request digests.
    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn warnings(&self) -> Vec<String> {
        self.warnings.lock().unwrap().clone()
    }

    pub fn position(&self) -> usize {
        *self.cursor.lock().unwrap()
    }

    pub fn remaining(&self) -> usize {
        self.cassette.exchanges.len() - self.position()
    }
}

impl ChatProvider for ReplayProvider {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        check_messages(messages)?;
        let mut cursor = self.cursor.lock().unwrap();
        let Some(ex) = self.cassette.exchanges.get(*cursor) else {
            return Err(LlmError::CassetteExhausted(self.cassette.exchanges.len()));
        };
        *cursor += 1;
        let digest = request_digest(&self.model, messages);
        if !ex.request_digest.is_empty() && ex.request_digest != digest {
            let msg =
                format!("exchange {}: request digest {} differs from recorded {}", ex.index, digest, ex.request_digest);
            warn!("{msg}");
            self.warnings.lock().unwrap().push(msg);
        }
        Ok(ex.response_text.clone())
    }

    fn model_name(&self) -> &str {
        &self.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ask(text: &str) -> Vec<ChatMessage> {
        vec![ChatMessage::user(text)]
    }

    #[test]
    fn scripted_queue() {
        let p = ScriptedProvider::new(["ok"]);
        assert_eq!(p.complete(&ask("hi")).unwrap(), "ok");
        assert_eq!(p.complete(&ask("again")), Err(LlmError::ScriptExhausted(1)));
    }

    #[test]
    fn preconditions() {
        let p = ScriptedProvider::new(["ok"]);
        assert!(matches!(p.complete(&[]), Err(LlmError::Precondition(_))));
        assert!(matches!(p.complete(&[ChatMessage::assistant("x")]), Err(LlmError::Precondition(_))));
        assert!(matches!(p.complete(&ask("  ")), Err(LlmError::Precondition(_))));
        assert_eq!(p.remaining(), 1);
    }

    struct FakeTransport {
        replies: Mutex<VecDeque<Result<TransportResponse, LlmError>>>,
        seen: Arc<Mutex<Vec<(String, Vec<(String, String)>, Value)>>>,
    }

    impl FakeTransport {
        fn new(replies: Vec<Result<TransportResponse, LlmError>>) -> Self {
            Self { replies: Mutex::new(replies.into()), seen: Arc::default() }
        }
    }

    impl Transport for FakeTransport {
        fn post_json(
            &self,
            url: &str,
            headers: &[(String, String)],
            body: &Value,
            _timeout: Duration,
        ) -> Result<TransportResponse, LlmError> {
            self.seen.lock().unwrap().push((url.to_string(), headers.to_vec(), body.clone()));
            self.replies.lock().unwrap().pop_front().expect("unexpected request")
        }
    }

    fn status(code: u16, body: &str) -> Result<TransportResponse, LlmError> {
        Ok(TransportResponse { status: code, body: body.into(), retry_after_ms: None })
    }

    const OK_BODY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}]}"#;

    fn provider(t: FakeTransport, sleeps: Arc<Mutex<Vec<Duration>>>) -> HttpProvider {
        let config = ProviderConfig { base_url: "http://127.0.0.1:9/v1/".into(), ..ProviderConfig::default() };
        HttpProvider::new(config)
            .unwrap()
            .with_api_key(Some("k".into()))
            .with_transport(t)
            .with_sleeper(Arc::new(move |d| sleeps.lock().unwrap().push(d)))
    }

    #[test]
    fn retries_rate_limits_with_backoff() {
        let t = FakeTransport::new(vec![status(429, ""), status(429, ""), status(200, OK_BODY)]);
        let seen = t.seen.clone();
        let sleeps = Arc::new(Mutex::new(Vec::new()));
        let p = provider(t, sleeps.clone());
        assert_eq!(p.complete(&ask("hi")).unwrap(), "hello");
        assert_eq!(*sleeps.lock().unwrap(), [Duration::from_millis(500), Duration::from_millis(1000)]);
        let seen = seen.lock().unwrap();
        assert_eq!(seen.len(), 3);
        assert_eq!(seen[0].0, "http://127.0.0.1:9/v1/chat/completions");
        assert!(seen[0].1.contains(&("Authorization".into(), "Bearer k".into())));
        assert_eq!(seen[0].2, json!({"model": "gpt-4o-mini", "messages": [{"role": "user", "content": "hi"}]}));
    }

    #[test]
    fn gives_up_after_max_retries() {
        let t = FakeTransport::new(vec![Err(LlmError::Timeout); 4]);
        let sleeps = Arc::new(Mutex::new(Vec::new()));
        let p = provider(t, sleeps.clone());
        assert_eq!(p.complete(&ask("hi")), Err(LlmError::Timeout));
        assert_eq!(sleeps.lock().unwrap().len(), 3);
    }

    #[test]
    fn auth_and_malformed_are_not_retried() {
        let sleeps = Arc::new(Mutex::new(Vec::new()));
        let p = provider(FakeTransport::new(vec![status(401, "no")]), sleeps.clone());
        assert!(matches!(p.complete(&ask("hi")), Err(LlmError::Auth(_))));
        let p = provider(FakeTransport::new(vec![status(200, "{}")]), sleeps.clone());
        assert!(matches!(p.complete(&ask("hi")), Err(LlmError::MalformedResponse(_))));
        assert!(sleeps.lock().unwrap().is_empty());
    }

    #[test]
    fn retry_after_header_wins_when_longer() {
        let limited = Ok(TransportResponse { status: 429, body: String::new(), retry_after_ms: Some(3000) });
        let sleeps = Arc::new(Mutex::new(Vec::new()));
        let p = provider(FakeTransport::new(vec![limited, status(200, OK_BODY)]), sleeps.clone());
        p.complete(&ask("hi")).unwrap();
        assert_eq!(*sleeps.lock().unwrap(), [Duration::from_secs(3)]);
    }

    #[test]
    fn digest_is_sha256_of_sorted_body() {
        let body = r#"{"messages":[{"content":"hi","role":"user"}],"model":"m"}"#;
        assert_eq!(request_digest("m", &ask("hi")), hex::encode(Sha256::digest(body.as_bytes())));
        assert_eq!(request_digest("m", &ask("hi")).len(), 64);
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let rec =
            record(ScriptedProvider::from_results([Ok("a".into()), Err(LlmError::Timeout), Ok("b".into())]), &path)
                .unwrap();
        rec.complete(&ask("one")).unwrap();
        assert!(rec.complete(&ask("two")).is_err());
        rec.complete(&ask("three")).unwrap();
        let c = Cassette::load(&path).unwrap();
        assert_eq!(c.exchanges.iter().map(|e| e.index).collect::<Vec<_>>(), [0, 1]);
        assert_eq!(c, rec.cassette());

        let rp = replay(c).unwrap().with_model("scripted");
        assert_eq!(rp.complete(&ask("one")).unwrap(), "a");
        assert_eq!(rp.complete(&ask("altered")).unwrap(), "b");
        assert_eq!(rp.warnings().len(), 1);
        assert_eq!(rp.complete(&ask("x")), Err(LlmError::CassetteExhausted(2)));
    }

    #[test]
    fn cassette_shape_and_validation() {
        let c = Cassette::from_responses(["a"]);
        let v: Value = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(v, json!({"version": 1, "exchanges": [{"index": 0, "request_digest": "", "response_text": "a"}]}));
        let mut bad = Cassette::from_responses(["a", "b"]);
        bad.exchanges[1].index = 5;
        assert!(replay(bad).is_err());
    }
}
