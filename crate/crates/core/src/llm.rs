//! Client for a locally hosted completion endpoint.
//!
//! The protocol is plain completion: a prompt goes in, text comes out. Three
//! backends implement [`LlmClient`]:
//!
//! - [`HttpClient`] POSTs `{model, prompt, temperature, max_tokens}` and reads
//!   the `text` field of the reply (feature `http`).
//! - [`ReplayClient`] answers from a recorded cache keyed by [`request_digest`].
//! - [`MockClient`] answers from a script of prompt patterns.
//!
//! [`RecordingClient`] wraps any backend and appends every response to a
//! replay cache.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("LLM unavailable: {0}")]
    Unavailable(String),
    #[error("no replay entry for request digest {digest}")]
    ReplayMiss { digest: String },
    #[error("LLM request timed out: {0}")]
    Timeout(String),
    #[error("LLM protocol error: {0}")]
    Protocol(String),
    #[error("LLM cache i/o error: {0}")]
    Io(String),
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;

    fn model(&self) -> &str;
}

impl<T: LlmClient + ?Sized> LlmClient for Box<T> {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }

    fn model(&self) -> &str {
        (**self).model()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Backend {
    Http,
    Replay { path: PathBuf },
    Mock { script: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// First retry delay; doubles on each further retry.
    pub backoff_base_ms: u64,
    /// Upper bound on concurrent requests.
    pub max_in_flight: usize,
    pub backend: Backend,
    /// Append every live response to this replay cache.
    pub record: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: "http://127.0.0.1:11434/api/generate".into(),
            model: "phi".into(),
            max_tokens: 1024,
            temperature: 0.0,
            timeout_secs: 120,
            max_retries: 3,
            backoff_base_ms: 1000,
            max_in_flight: 2,
            backend: Backend::Http,
            record: None,
        }
    }
}

impl LlmConfig {
    /// Overlay `SFAA_LLM_ENDPOINT` and `SFAA_LLM_MODEL` when set.
    pub fn apply_env(&mut self) {
        if let Ok(v) = std::env::var("SFAA_LLM_ENDPOINT") {
            if !v.is_empty() {
                self.endpoint = v;
            }
        }
        if let Ok(v) = std::env::var("SFAA_LLM_MODEL") {
            if !v.is_empty() {
                self.model = v;
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if matches!(self.backend, Backend::Replay { .. }) && self.temperature != 0.0 {
            return Err("replay backend requires temperature 0".into());
        }
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be at least 1".into());
        }
        Ok(())
    }

    /// Resolve relative backend paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.backend {
            Backend::Replay { path } => fix(path),
            Backend::Mock { script } => fix(script),
            Backend::Http => {}
        }
        if let Some(p) = &mut self.record {
            fix(p);
        }
    }
}

/// Hex SHA-256 of the canonical request `{"model":..,"prompt":..,"temperature":..}`
/// (keys sorted, no whitespace).
pub fn request_digest(model: &str, prompt: &str, temperature: f64) -> String {
    let canonical = format!(
        "{{\"model\":{},\"prompt\":{},\"temperature\":{}}}",
        serde_json::to_string(model).expect("string"),
        serde_json::to_string(prompt).expect("string"),
        serde_json::to_string(&temperature).unwrap_or_else(|_| "null".into()),
    );
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub digest: String,
    pub response: String,
}

/// Answers from a recorded cache; never touches the network.
#[derive(Debug)]
pub struct ReplayClient {
    model: String,
    temperature: f64,
    entries: BTreeMap<String, String>,
    skipped_lines: usize,
}

impl ReplayClient {
    pub fn load(path: &Path, model: &str, temperature: f64) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self::from_cache_text(&text, model, temperature))
    }

    /// Corrupted lines are skipped with a warning; later duplicates win.
    pub fn from_cache_text(text: &str, model: &str, temperature: f64) -> Self {
        let mut entries = BTreeMap::new();
        let mut skipped_lines = 0;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<CacheEntry>(line) {
                Ok(e) => {
                    entries.insert(e.digest, e.response);
                }
                Err(err) => {
                    log::warn!("replay cache line {} skipped: {err}", i + 1);
                    skipped_lines += 1;
                }
            }
        }
        ReplayClient {
            model: model.to_string(),
            temperature,
            entries,
            skipped_lines,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn skipped_lines(&self) -> usize {
        self.skipped_lines
    }
}

impl LlmClient for ReplayClient {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let digest = request_digest(&self.model, prompt, self.temperature);
        self.entries.get(&digest).cloned().ok_or(LlmError::ReplayMiss { digest })
    }

    fn model(&self) -> &str {
        &self.model
    }
}

/// One scripted reply. A rule fires when every `contains` needle occurs in
/// the prompt and `pattern` (if any) matches.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default)]
    pub pattern: Option<String>,
    pub response: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
    /// Reply when no rule fires; `None` makes the mock report unavailability.
    #[serde(default)]
    pub default: Option<String>,
}

/// Scripted backend for tests and offline fixtures.
#[derive(Debug)]
pub struct MockClient {
    model: String,
    rules: Vec<(MockRule, Option<Regex>)>,
    default: Option<String>,
    calls: AtomicUsize,
}

impl MockClient {
    pub fn new(model: &str, script: MockScript) -> Result<Self, LlmError> {
        let mut rules = Vec::new();
        for r in script.rules {
            let re = match &r.pattern {
                Some(p) => Some(Regex::new(p).map_err(|e| LlmError::Protocol(format!("mock pattern {p:?}: {e}")))?),
                None => None,
            };
            rules.push((r, re));
        }
        Ok(MockClient {
            model: model.to_string(),
            rules,
            default: script.default,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn load(path: &Path, model: &str) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        let script: MockScript =
            serde_json::from_str(&text).map_err(|e| LlmError::Protocol(format!("mock script: {e}")))?;
        Self::new(model, script)
    }

    /// Answer every prompt with `response`.
    pub fn constant(response: &str) -> Self {
        Self::new(
            "mock",
            MockScript {
                rules: Vec::new(),
                default: Some(response.to_string()),
            },
        )
        .expect("no patterns to compile")
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl LlmClient for MockClient {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        for (rule, re) in &self.rules {
            let contains = rule.contains.iter().all(|n| prompt.contains(n.as_str()));
            let pattern = re.as_ref().is_none_or(|re| re.is_match(prompt));
            if contains && pattern {
                return Ok(rule.response.clone());
            }
        }
        self.default
            .clone()
            .ok_or_else(|| LlmError::Unavailable("mock script has no rule for this prompt".into()))
    }

    fn model(&self) -> &str {
        &self.model
    }
}

/// Wraps a backend and appends `{digest, response}` lines to a cache file.
pub struct RecordingClient<C> {
    inner: C,
    path: PathBuf,
    temperature: f64,
    lock: Mutex<()>,
}

impl<C: LlmClient> RecordingClient<C> {
    pub fn new(inner: C, path: impl Into<PathBuf>, temperature: f64) -> Self {
        RecordingClient {
            inner,
            path: path.into(),
            temperature,
            lock: Mutex::new(()),
        }
    }

    pub fn into_inner(self) -> C {
        self.inner
    }
}

/// Append one response to a replay cache under its request digest.
pub fn record(path: &Path, model: &str, prompt: &str, temperature: f64, response: &str) -> Result<(), LlmError> {
    let entry = CacheEntry {
        digest: request_digest(model, prompt, temperature),
        response: response.to_string(),
    };
    let mut line = serde_json::to_string(&entry).map_err(|e| LlmError::Io(e.to_string()))?;
    line.push('\n');
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| LlmError::Io(e.to_string()))?;
        }
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
    f.write_all(line.as_bytes()).map_err(|e| LlmError::Io(e.to_string()))
}

impl<C: LlmClient> LlmClient for RecordingClient<C> {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let response = self.inner.complete(prompt)?;
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        record(&self.path, self.inner.model(), prompt, self.temperature, &response)?;
        Ok(response)
    }

    fn model(&self) -> &str {
        self.inner.model()
    }
}

/// Counting semaphore bounding in-flight requests.
#[cfg(feature = "http")]
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: std::sync::Condvar,
}

#[cfg(feature = "http")]
impl Slots {
    fn new(n: usize) -> Self {
        Slots {
            free: Mutex::new(n.max(1)),
            cv: std::sync::Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|p| p.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|p| p.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

#[cfg(feature = "http")]
struct SlotGuard<'a>(&'a Slots);

#[cfg(feature = "http")]
impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|p| p.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}

#[cfg(feature = "http")]
pub use http::HttpClient;

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use serde::Serialize;

    use super::{LlmClient, LlmConfig, LlmError, Slots};

    #[derive(Serialize)]
    struct CompletionRequest<'a> {
        model: &'a str,
        prompt: &'a str,
        temperature: f64,
        max_tokens: u32,
    }

    /// Blocking HTTP backend with retries and exponential backoff.
    pub struct HttpClient {
        cfg: LlmConfig,
        agent: ureq::Agent,
        slots: Slots,
        retries_used: std::sync::atomic::AtomicUsize,
    }

    impl HttpClient {
        pub fn new(cfg: LlmConfig) -> Self {
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs(cfg.timeout_secs.max(1))))
                .http_status_as_error(false)
                .build()
                .into();
            let slots = Slots::new(cfg.max_in_flight);
            HttpClient {
                cfg,
                agent,
                slots,
                retries_used: Default::default(),
            }
        }

        /// Total retries performed so far.
        pub fn retries_used(&self) -> usize {
            self.retries_used.load(std::sync::atomic::Ordering::SeqCst)
        }

        fn attempt(&self, prompt: &str) -> Result<String, LlmError> {
            let body = CompletionRequest {
                model: &self.cfg.model,
                prompt,
                temperature: self.cfg.temperature,
                max_tokens: self.cfg.max_tokens,
            };
            let mut resp = self.agent.post(&self.cfg.endpoint).send_json(&body).map_err(map_err)?;
            let status = resp.status();
            if !status.is_success() {
                return Err(LlmError::Unavailable(format!("endpoint returned {status}")));
            }
            let value: serde_json::Value = resp
                .body_mut()
                .read_json()
                .map_err(|e| LlmError::Protocol(format!("reply is not JSON: {e}")))?;
            value
                .get("text")
                .or_else(|| value.get("response"))
                .and_then(|v| v.as_str())
                .map(str::to_string)
                .ok_or_else(|| LlmError::Protocol("reply has no text field".into()))
        }
    }

    fn map_err(e: ureq::Error) -> LlmError {
        match e {
            ureq::Error::Timeout(t) => LlmError::Timeout(t.to_string()),
            other => LlmError::Unavailable(other.to_string()),
        }
    }

    impl LlmClient for HttpClient {
        fn complete(&self, prompt: &str) -> Result<String, LlmError> {
            let _slot = self.slots.acquire();
            let mut delay = Duration::from_millis(self.cfg.backoff_base_ms);
            let mut attempt = 0;
            loop {
                match self.attempt(prompt) {
                    Ok(text) => return Ok(text),
                    // a malformed reply will not improve on retry
                    Err(e @ LlmError::Protocol(_)) => return Err(e),
                    Err(e) if attempt >= self.cfg.max_retries => {
                        return Err(match e {
                            LlmError::Timeout(m) => LlmError::Timeout(m),
                            other => LlmError::Unavailable(format!(
                                "{other} (after {} retries)",
                                self.cfg.max_retries
                            )),
                        })
                    }
                    Err(e) => {
                        log::warn!("LLM request failed ({e}); retrying in {delay:?}");
                        std::thread::sleep(delay);
                        delay *= 2;
                        attempt += 1;
                        self.retries_used.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    }
                }
            }
        }

        fn model(&self) -> &str {
            &self.cfg.model
        }
    }
}

/// Build the configured backend, wrapped in a recorder when `record` is set.
pub fn build_client(cfg: &LlmConfig) -> Result<Box<dyn LlmClient>, LlmError> {
    cfg.validate().map_err(LlmError::Protocol)?;
    let client: Box<dyn LlmClient> = match &cfg.backend {
        Backend::Replay { path } => Box::new(ReplayClient::load(path, &cfg.model, cfg.temperature)?),
        Backend::Mock { script } => Box::new(MockClient::load(script, &cfg.model)?),
        #[cfg(feature = "http")]
        Backend::Http => Box::new(HttpClient::new(cfg.clone())),
        #[cfg(not(feature = "http"))]
        Backend::Http => return Err(LlmError::Unavailable("built without the http feature".into())),
    };
    Ok(match &cfg.record {
        Some(path) => Box::new(RecordingClient::new(client, path.clone(), cfg.temperature)),
        None => client,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable_and_key_sensitive() {
        let a = request_digest("phi", "hello", 0.0);
        assert_eq!(a.len(), 64);
        assert_eq!(a, request_digest("phi", "hello", 0.0));
        assert_ne!(a, request_digest("llama", "hello", 0.0));
        assert_ne!(a, request_digest("phi", "hello!", 0.0));
        assert_ne!(a, request_digest("phi", "hello", 0.5));
    }

    #[test]
    fn mock_returns_scripted_array_verbatim() {
        let arr = r#"[{"quote":"OptiCore","group":"OrganizationalVisual","subtype":"organization"}]"#;
        let mock = MockClient::new(
            "m",
            MockScript {
                rules: vec![MockRule {
                    contains: vec!["identifying details".into()],
                    pattern: None,
                    response: arr.into(),
                }],
                default: None,
            },
        )
        .unwrap();
        assert_eq!(mock.complete("find identifying details in: ...").unwrap(), arr);
        assert!(matches!(mock.complete("other"), Err(LlmError::Unavailable(_))));
        assert_eq!(mock.calls(), 2);
    }

    #[test]
    fn replay_miss_names_digest() {
        let replay = ReplayClient::from_cache_text("", "phi", 0.0);
        let err = replay.complete("p").unwrap_err();
        assert_eq!(
            err,
            LlmError::ReplayMiss {
                digest: request_digest("phi", "p", 0.0)
            }
        );
    }

    #[test]
    fn record_then_replay_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cache = dir.path().join("cache.jsonl");
        let rec = RecordingClient::new(MockClient::constant("answer one"), &cache, 0.0);
        assert_eq!(rec.complete("prompt a").unwrap(), "answer one");
        let rec = RecordingClient::new(MockClient::constant("answer two"), &cache, 0.0);
        rec.complete("prompt b").unwrap();
        let replay = ReplayClient::load(&cache, "mock", 0.0).unwrap();
        assert_eq!(replay.len(), 2);
        assert_eq!(replay.complete("prompt a").unwrap(), "answer one");
        assert_eq!(replay.complete("prompt b").unwrap(), "answer two");
    }

    #[test]
    fn corrupted_cache_line_is_skipped() {
        let good = serde_json::to_string(&CacheEntry {
            digest: request_digest("m", "p", 0.0),
            response: "ok".into(),
        })
        .unwrap();
        let text = format!("{{\"digest\": \"abc\", \"resp\n{good}\nnot json at all\n");
        let replay = ReplayClient::from_cache_text(&text, "m", 0.0);
        assert_eq!(replay.skipped_lines(), 2);
        assert_eq!(replay.complete("p").unwrap(), "ok");
    }

    #[test]
    fn replay_requires_zero_temperature() {
        let cfg = LlmConfig {
            temperature: 0.7,
            backend: Backend::Replay { path: "x".into() },
            ..LlmConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
