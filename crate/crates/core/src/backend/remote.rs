use std::collections::BTreeMap;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatMessage, ChatRequest, Role};

/// Endpoint settings. The API key is read from the environment variable
/// named by `api_key_env` so config files never carry secrets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    /// Per-role model overrides, e.g. a vision model for observer and critic.
    #[serde(default)]
    pub role_models: BTreeMap<Role, String>,
    #[serde(default)]
    pub role_temperatures: BTreeMap<Role, f32>,
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    2
}

fn default_backoff() -> u64 {
    500
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            role_models: BTreeMap::new(),
            role_temperatures: BTreeMap::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        serde_json::from_str(text).map_err(|e| BackendError::Config(e.to_string()))
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f32,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

/// Blocking client for any chat-completions style endpoint.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    inner: Arc<Inner>,
}

#[derive(Debug)]
struct Inner {
    config: RemoteConfig,
    url: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let base = config.base_url.trim();
        if base.is_empty() {
            return Err(BackendError::Config("base_url is required".into()));
        }
        if config.model.trim().is_empty() {
            return Err(BackendError::Config("model is required".into()));
        }
        let base = base.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        reqwest::Url::parse(&url).map_err(|e| BackendError::Config(format!("bad base_url: {e}")))?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| BackendError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self {
            inner: Arc::new(Inner {
                config,
                url,
                api_key,
                http,
            }),
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.inner.config
    }

    fn attempt(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let cfg = &self.inner.config;
        let model = cfg
            .role_models
            .get(&req.role)
            .or(req.model.as_ref())
            .unwrap_or(&cfg.model);
        let temperature = cfg.role_temperatures.get(&req.role).copied().unwrap_or(req.temperature);
        let body = WireRequest {
            model,
            messages: &req.messages,
            temperature,
            max_tokens: req.max_tokens,
        };
        let mut call = self.inner.http.post(&self.inner.url).json(&body);
        if let Some(key) = &self.inner.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(map_transport)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendError::Http(status.as_u16()));
        }
        let wire: WireResponse = resp.json().map_err(|e| BackendError::Malformed(e.to_string()))?;
        wire.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .filter(|c| !c.is_empty())
            .ok_or_else(|| BackendError::Malformed("no choices[0].message.content".into()))
    }
}

fn map_transport(e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout
    } else if e.is_decode() {
        BackendError::Malformed(e.to_string())
    } else {
        BackendError::Connection(e.to_string())
    }
}

fn is_retryable(e: &BackendError) -> bool {
    match e {
        BackendError::Timeout | BackendError::Connection(_) => true,
        BackendError::Http(s) => matches!(s, 408 | 429 | 500..=599),
        _ => false,
    }
}

impl ChatBackend for RemoteBackend {
    /// Sends the request, retrying transient failures at most `max_retries`
    /// times with exponential backoff.
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError> {
        req.validate()?;
        let cfg = &self.inner.config;
        let mut delay = Duration::from_millis(cfg.backoff_ms);
        let mut attempt = 0;
        loop {
            match self.attempt(req) {
                Ok(text) => return Ok(text),
                Err(e) if is_retryable(&e) && attempt < cfg.max_retries => {
                    tracing::debug!(role = %req.role, attempt, error = %e, "retrying chat request");
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn session(&self) -> Box<dyn ChatBackend> {
        Box::new(self.clone())
    }

    fn name(&self) -> &str {
        "remote"
    }
}
