//! OpenAI-compatible chat-completions provider (blocking, bounded retry).

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ProviderError, TextProvider};

/// Environment variable holding the API key. Keys never live in config files.
pub const API_KEY_ENV: &str = "DOCBACK_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    /// Full chat-completions URL, e.g. `https://api.openai.com/v1/chat/completions`.
    pub endpoint_url: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First backoff delay; doubles per retry, capped at 8 s.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_timeout() -> f64 {
    60.0
}

fn default_retries() -> u32 {
    3
}

fn default_backoff() -> u64 {
    500
}

pub struct OpenAiProvider {
    config: ProviderConfig,
    api_key: String,
    agent: ureq::Agent,
    id: String,
}

impl std::fmt::Debug for OpenAiProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiProvider")
            .field("config", &self.config)
            .field("id", &self.id)
            .finish_non_exhaustive()
    }
}

impl OpenAiProvider {
    pub fn new(config: ProviderConfig, api_key: impl Into<String>) -> Result<Self, ProviderError> {
        let id = format!("openai:{}", config.model);
        if !(config.timeout_s > 0.0 && config.timeout_s.is_finite()) {
            return Err(ProviderError {
                provider_id: id,
                message: format!("timeout_s {} must be positive", config.timeout_s),
                retriable: false,
            });
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            api_key: api_key.into(),
            agent,
            id,
        })
    }

    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env(config: ProviderConfig) -> Result<Self, ProviderError> {
        let key = std::env::var(API_KEY_ENV).map_err(|_| ProviderError {
            provider_id: format!("openai:{}", config.model),
            message: format!("{API_KEY_ENV} is not set"),
            retriable: false,
        })?;
        Self::new(config, key)
    }

    fn err(&self, message: impl Into<String>, retriable: bool) -> ProviderError {
        ProviderError {
            provider_id: self.id.clone(),
            message: message.into(),
            retriable,
        }
    }

    fn attempt(&self, body: &str) -> Result<String, ProviderError> {
        let resp = self
            .agent
            .post(&self.config.endpoint_url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| self.err(format!("transport: {e}"), true))?;
        let status = resp.status().as_u16();
        let text = resp
            .into_body()
            .read_to_string()
            .map_err(|e| self.err(format!("reading body: {e}"), true))?;
        if status == 429 || status >= 500 {
            return Err(self.err(format!("http {status}: {text}"), true));
        }
        if !(200..300).contains(&status) {
            return Err(self.err(format!("http {status}: {text}"), false));
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| self.err(format!("bad json: {e}"), false))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| self.err("response has no choices[0].message.content", false))
    }
}

impl TextProvider for OpenAiProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, system_prompt: &str, user_payload: &str) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_payload},
            ],
        })
        .to_string();
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) if e.retriable && attempt < self.config.max_retries => {
                    attempt += 1;
                    std::thread::sleep(delay);
                    delay = (delay * 2).min(Duration::from_secs(8));
                }
                Err(e) => return Err(e),
            }
        }
    }
}
