use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use iul_core::llm::{ChatClient, ChatError, RenderedPrompt};

/// Default environment variable for the chat endpoint's API key.
pub const LLM_TOKEN_ENV: &str = "IUL_LLM_TOKEN";

#[derive(Debug, Clone)]
pub struct ChatEndpointConfig {
    /// Base URL up to and including the API version, e.g. `http://host/v1`.
    pub base_url: String,
    pub model: String,
    pub token: Option<String>,
    pub timeout: Duration,
}

impl ChatEndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self { base_url: base_url.into(), model: model.into(), token: None, timeout: Duration::from_secs(60) }
    }

    /// Reads the token from the named environment variable, if set.
    pub fn with_token_from_env(mut self, var: &str) -> Self {
        self.token = std::env::var(var).ok().filter(|t| !t.is_empty());
        self
    }
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

/// Client for `POST {base}/chat/completions` in the OpenAI request shape.
pub struct OpenAiChatClient {
    cfg: ChatEndpointConfig,
    agent: ureq::Agent,
}

impl OpenAiChatClient {
    pub fn new(cfg: ChatEndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { cfg, agent }
    }
}

impl ChatClient for OpenAiChatClient {
    fn model(&self) -> &str {
        &self.cfg.model
    }

    fn complete(&self, prompt: &RenderedPrompt) -> Result<String, ChatError> {
        let body = json!({
            "model": self.cfg.model,
            "temperature": 0,
            "n": 1,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
        });
        let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(token) = &self.cfg.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req.send(body.to_string()).map_err(|e| ChatError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| ChatError::Transport(e.to_string()))?;
        match status {
            200..=299 => {}
            408 | 429 | 500..=599 => return Err(ChatError::Transport(format!("HTTP {status}: {text}"))),
            _ => return Err(ChatError::Protocol(format!("HTTP {status}: {text}"))),
        }
        let completion: Completion =
            serde_json::from_str(&text).map_err(|e| ChatError::Protocol(format!("bad completion body: {e}")))?;
        completion
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ChatError::Protocol("completion has no message content".into()))
    }
}
