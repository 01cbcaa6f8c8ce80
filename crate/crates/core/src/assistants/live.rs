use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatTurn, LlmClient, LlmError};

pub const BASE_URL_VAR: &str = "LLM_BASE_URL";
pub const API_KEY_VAR: &str = "LLM_API_KEY";
const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct Request<'a> {
    model: &'a str,
    messages: Vec<Message<'a>>,
    temperature: f64,
}

#[derive(Deserialize)]
struct Response {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Reply,
}

#[derive(Deserialize)]
struct Reply {
    content: Option<String>,
}

/// Chat-completions HTTP client.
pub struct LiveBackend {
    agent: ureq::Agent,
    base_url: String,
    api_key: String,
    model: String,
    temperature: f64,
}

impl std::fmt::Debug for LiveBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveBackend")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl LiveBackend {
    pub fn new(
        base_url: impl Into<String>,
        api_key: impl Into<String>,
        model: impl Into<String>,
    ) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build();
        LiveBackend {
            agent: ureq::Agent::new_with_config(config),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            model: model.into(),
            temperature: 0.0,
        }
    }

    /// Reads the endpoint and key from `LLM_BASE_URL` and `LLM_API_KEY`.
    pub fn from_env(model: impl Into<String>) -> Result<Self, LlmError> {
        let key = std::env::var(API_KEY_VAR)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| LlmError::Config(format!("{API_KEY_VAR} is not set")))?;
        let base = std::env::var(BASE_URL_VAR).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        Ok(Self::new(base, key, model))
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }
}

impl LlmClient for LiveBackend {
    fn send(
        &mut self,
        system: &str,
        conversation: &[ChatTurn],
        user: &str,
    ) -> Result<String, LlmError> {
        let mut messages = vec![Message {
            role: "system",
            content: system,
        }];
        for t in conversation {
            messages.push(Message {
                role: "user",
                content: &t.user,
            });
            messages.push(Message {
                role: "assistant",
                content: &t.assistant,
            });
        }
        messages.push(Message {
            role: "user",
            content: user,
        });
        let body = Request {
            model: &self.model,
            messages,
            temperature: self.temperature,
        };
        let url = format!("{}/chat/completions", self.base_url);
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let parsed: Response = resp
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Transport(format!("malformed response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Transport("response has no message content".into()))
    }
}
