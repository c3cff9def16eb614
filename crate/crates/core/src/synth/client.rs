use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use super::{ChatRequest, Message};

pub const ENV_API_BASE: &str = "ACE_LLM_API_BASE";
pub const ENV_API_KEY: &str = "ACE_LLM_API_KEY";
pub const ENV_MODEL: &str = "ACE_LLM_MODEL";

#[derive(Debug, Clone, thiserror::Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response body: {0}")]
    BadResponse(String),
    #[error("fixture: {0}")]
    Fixture(String),
    #[error("invalid client configuration: {0}")]
    Config(String),
}

impl ClientError {
    /// Transport failures, 429 and 5xx are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Status { status, .. } => *status == 429 || (500..600).contains(status),
            _ => false,
        }
    }
}

/// Anything that turns a conversation into the first choice's text.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError>;
}

/// API key that never prints.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(s: impl Into<String>) -> Self {
        Secret(s.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0.is_empty() {
            "Secret(<empty>)"
        } else {
            "Secret(***)"
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmConfig {
    pub api_base: String,
    pub model_name: String,
    pub api_key: Secret,
    pub max_concurrency: usize,
    pub max_retries: u32,
    pub request_timeout_ms: u64,
    pub temperature: f64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            api_base: "https://api.openai.com/v1".into(),
            model_name: "gpt-4o-mini".into(),
            api_key: Secret::default(),
            max_concurrency: 8,
            max_retries: 3,
            request_timeout_ms: 120_000,
            temperature: 0.0,
        }
    }
}

impl LlmConfig {
    /// Defaults overlaid with `ACE_LLM_API_BASE`, `ACE_LLM_API_KEY` and `ACE_LLM_MODEL`.
    pub fn from_env() -> Self {
        let mut cfg = LlmConfig::default();
        if let Ok(v) = std::env::var(ENV_API_BASE) {
            cfg.api_base = v;
        }
        if let Ok(v) = std::env::var(ENV_API_KEY) {
            cfg.api_key = Secret::new(v);
        }
        if let Ok(v) = std::env::var(ENV_MODEL) {
            cfg.model_name = v;
        }
        cfg
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ClientError> {
        if self.max_concurrency < 1 {
            return Err(ClientError::Config("max_concurrency must be >= 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(ClientError::Config("temperature must be >= 0".into()));
        }
        if self.api_base.trim().is_empty() {
            return Err(ClientError::Config("api_base is empty".into()));
        }
        Ok(())
    }

    /// Full chat-completions URL. A base that already names the route is used as-is.
    pub fn endpoint(&self) -> String {
        let base = self.api_base.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
}

/// Blocking HTTP client for a chat-completion JSON endpoint.
pub struct HttpChatClient {
    config: LlmConfig,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(config: LlmConfig) -> Result<Self, ClientError> {
        config.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.request_timeout_ms))
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(HttpChatClient { config, http })
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        let body = WireRequest {
            model: &self.config.model_name,
            messages: &request.messages,
            temperature: self.config.temperature,
        };
        let mut req = self.http.post(self.config.endpoint()).json(&body);
        if !self.config.api_key.is_empty() {
            req = req.bearer_auth(self.config.api_key.expose());
        }
        let resp = req
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Status {
                status: status.as_u16(),
                body: crate::corpus::truncate_utf8(text, 1024),
            });
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| ClientError::BadResponse(e.to_string()))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ClientError::BadResponse("missing choices[0].message.content".into()))
    }
}

/// Serves canned responses from a directory: `<tag>.txt`, falling back to `default.txt`.
#[derive(Debug, Clone)]
pub struct FixtureClient {
    dir: PathBuf,
}

impl FixtureClient {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, ClientError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(ClientError::Config(format!(
                "fixture directory {} does not exist",
                dir.display()
            )));
        }
        Ok(FixtureClient { dir })
    }
}

impl ChatClient for FixtureClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        let name: String = request
            .tag
            .chars()
            .map(|c| if c == '/' || c == '\\' { '_' } else { c })
            .collect();
        for candidate in [format!("{name}.txt"), "default.txt".to_string()] {
            let path = self.dir.join(candidate);
            if path.is_file() {
                return std::fs::read_to_string(&path)
                    .map_err(|e| ClientError::Fixture(format!("{}: {e}", path.display())));
            }
        }
        Err(ClientError::Fixture(format!(
            "no fixture for `{}` in {}",
            request.tag,
            self.dir.display()
        )))
    }
}
