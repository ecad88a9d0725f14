//! Chat-completion backends. Every language-model role in the agent goes
//! through [`ChatBackend::complete`], so a remote endpoint and the
//! deterministic [`ScriptedBackend`] are interchangeable.

mod remote;
mod scripted;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use remote::{RemoteBackend, RemoteConfig};
pub use scripted::{ScriptRule, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Observer,
    Summarizer,
    Planner,
    Critic,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Observer, Role::Summarizer, Role::Planner, Role::Critic];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Observer => "observer",
            Role::Summarizer => "summarizer",
            Role::Planner => "planner",
            Role::Critic => "critic",
        }
    }

    /// Decoding temperature used when the config does not override it.
    pub fn default_temperature(self) -> f32 {
        match self {
            Role::Planner | Role::Critic => 0.2,
            Role::Observer | Role::Summarizer => 0.0,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: MessageRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    /// Overrides the backend's model for this call.
    pub model: Option<String>,
    pub temperature: f32,
    pub max_tokens: u32,
    pub role: Role,
}

impl ChatRequest {
    pub fn new(role: Role, messages: Vec<ChatMessage>) -> Self {
        Self {
            messages,
            model: None,
            temperature: role.default_temperature(),
            max_tokens: 1024,
            role,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::InvalidRequest("no messages".into()));
        }
        if self.messages.iter().any(|m| m.content.is_empty()) {
            return Err(BackendError::InvalidRequest("empty message content".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Content of the last user message, the text scripted rules match on.
    pub fn last_user(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == MessageRole::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned HTTP {0}")]
    Http(u16),
    #[error("no script rule matched the {0} request")]
    NoRuleMatched(Role),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration error: {0}")]
    Config(String),
}

/// A chat-completion engine. Handles are shared across concurrent trials.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, BackendError>;

    /// A handle for one trial. Backends with per-session state (scripted
    /// one-shot rules) return a fresh copy; stateless ones share themselves.
    fn session(&self) -> Box<dyn ChatBackend>;

    fn name(&self) -> &str;
}
