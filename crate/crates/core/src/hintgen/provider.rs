use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::mock::MockProvider;

pub const ENV_ENDPOINT: &str = "HINTGEN_ENDPOINT";
pub const ENV_API_KEY: &str = "HINTGEN_API_KEY";
pub const ENV_TIMEOUT_MS: &str = "HINTGEN_TIMEOUT_MS";
pub const MAX_RETRIES_LIMIT: u8 = 5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {0}")]
    Status(u16),
    #[error("unexpected response shape: {0}")]
    BadResponse(String),
    #[error("invalid provider config: {0}")]
    Config(String),
    #[error("provider failure: {0}")]
    Other(String),
}

/// A text-generation backend: one prompt in, one completion out.
pub trait TextProvider: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError>;
}

impl<P: TextProvider + ?Sized> TextProvider for Arc<P> {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        (**self).complete(prompt)
    }
}

impl<P: TextProvider + ?Sized> TextProvider for &P {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        (**self).complete(prompt)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model: String,
    pub timeout_ms: u64,
    pub max_retries: u8,
    pub seed: u64,
    /// Never serialized; taken from the environment.
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            endpoint: None,
            model: "default".into(),
            timeout_ms: 30_000,
            max_retries: 2,
            seed: 0,
            api_key: None,
        }
    }
}

impl ProviderConfig {
    pub fn mock(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn http(endpoint: impl Into<String>) -> Self {
        Self {
            kind: ProviderKind::Http,
            endpoint: Some(endpoint.into()),
            ..Self::default()
        }
    }

    /// Fills endpoint, API key and timeout from `HINTGEN_*` variables when set.
    pub fn with_env(mut self) -> Result<Self, ProviderError> {
        if let Ok(e) = std::env::var(ENV_ENDPOINT) {
            if !e.is_empty() {
                self.endpoint = Some(e);
            }
        }
        if let Ok(k) = std::env::var(ENV_API_KEY) {
            if !k.is_empty() {
                self.api_key = Some(k);
            }
        }
        if let Ok(t) = std::env::var(ENV_TIMEOUT_MS) {
            self.timeout_ms = t
                .parse()
                .map_err(|_| ProviderError::Config(format!("{ENV_TIMEOUT_MS}={t:?} is not an integer")))?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.kind == ProviderKind::Http && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(ProviderError::Config("http provider requires an endpoint".into()));
        }
        if self.max_retries > MAX_RETRIES_LIMIT {
            return Err(ProviderError::Config(format!(
                "max_retries {} exceeds {MAX_RETRIES_LIMIT}",
                self.max_retries
            )));
        }
        if self.timeout_ms == 0 {
            return Err(ProviderError::Config("timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Arc<dyn TextProvider>, ProviderError> {
        self.validate()?;
        Ok(match self.kind {
            ProviderKind::Mock => Arc::new(MockProvider::new(self.seed)),
            ProviderKind::Http => Arc::new(HttpProvider::new(self)?),
        })
    }
}

/// Chat-completion style HTTP client. Sends
/// `{"model", "temperature": 0, "messages": [{"role": "user", "content"}]}` and
/// reads the first candidate's text.
pub struct HttpProvider {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    max_retries: u8,
}

impl HttpProvider {
    pub fn new(cfg: &ProviderConfig) -> Result<Self, ProviderError> {
        cfg.validate()?;
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| ProviderError::Config("missing endpoint".into()))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .build()
            .into();
        Ok(Self {
            agent,
            endpoint,
            model: cfg.model.clone(),
            api_key: cfg.api_key.clone(),
            max_retries: cfg.max_retries,
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, ProviderError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| match e {
            ureq::Error::StatusCode(code) => ProviderError::Status(code),
            other => ProviderError::Transport(other.to_string()),
        })?;
        let v: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        extract_completion_text(&v)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::BadResponse("no completion text in response".into()))
    }
}

fn retryable(e: &ProviderError) -> bool {
    match e {
        ProviderError::Transport(_) => true,
        ProviderError::Status(code) => *code == 429 || *code >= 500,
        _ => false,
    }
}

impl TextProvider for HttpProvider {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut attempt = 0u8;
        loop {
            match self.attempt(&body) {
                Err(e) if retryable(&e) && attempt < self.max_retries => {
                    attempt += 1;
                    log::warn!("provider attempt {attempt} failed: {e}; retrying");
                    thread::sleep(Duration::from_millis(100 * attempt as u64));
                }
                other => return other,
            }
        }
    }
}

/// First candidate text from the common completion response shapes.
pub fn extract_completion_text(v: &Value) -> Option<&str> {
    let choice = v.get("choices").and_then(|c| c.get(0));
    choice
        .and_then(|c| c.pointer("/message/content"))
        .and_then(Value::as_str)
        .or_else(|| choice.and_then(|c| c.get("text")).and_then(Value::as_str))
        .or_else(|| v.pointer("/content/0/text").and_then(Value::as_str))
        .or_else(|| v.get("output_text").and_then(Value::as_str))
}

/// Wraps a provider with a fixed sleep before each call.
pub struct Delayed<P> {
    inner: P,
    delay: Duration,
}

impl<P> Delayed<P> {
    pub fn new(inner: P, delay: Duration) -> Self {
        Self { inner, delay }
    }
}

impl<P: TextProvider> TextProvider for Delayed<P> {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        thread::sleep(self.delay);
        self.inner.complete(prompt)
    }
}

/// Counts calls to the wrapped provider.
pub struct Counting<P> {
    inner: P,
    calls: AtomicUsize,
}

impl<P> Counting<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<P: TextProvider> TextProvider for Counting<P> {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(prompt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ProviderConfig::mock(1).validate().is_ok());
        let mut http = ProviderConfig::http("http://localhost:1/v1");
        assert!(http.validate().is_ok());
        http.endpoint = None;
        assert!(matches!(http.validate(), Err(ProviderError::Config(_))));
        let mut cfg = ProviderConfig::mock(1);
        cfg.max_retries = 6;
        assert!(matches!(cfg.validate(), Err(ProviderError::Config(_))));
    }

    #[test]
    fn completion_shapes() {
        let openai = json!({"choices": [{"message": {"role": "assistant", "content": "hi"}}]});
        assert_eq!(extract_completion_text(&openai), Some("hi"));
        let legacy = json!({"choices": [{"text": "yo"}]});
        assert_eq!(extract_completion_text(&legacy), Some("yo"));
        let blocks = json!({"content": [{"type": "text", "text": "hey"}]});
        assert_eq!(extract_completion_text(&blocks), Some("hey"));
        assert_eq!(extract_completion_text(&json!({"foo": 1})), None);
    }
}
