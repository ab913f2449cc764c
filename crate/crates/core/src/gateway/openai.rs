//! Client for OpenAI-compatible chat-completion endpoints.

use std::time::Duration;

use serde_json::{json, Value};

use super::{CompletionRequest, GatewayError, Provider, ProviderReply};

pub const API_KEY_ENV: &str = "GATED_RAG_API_KEY";
pub const API_BASE_ENV: &str = "GATED_RAG_API_BASE";
const DEFAULT_BASE: &str = "https://api.openai.com/v1";

pub struct OpenAiCompatible {
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for OpenAiCompatible {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiCompatible")
            .field("base_url", &self.base_url)
            .finish_non_exhaustive()
    }
}

impl OpenAiCompatible {
    pub fn new(base_url: &str, api_key: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: api_key.to_string(),
            agent,
        }
    }

    /// Reads credentials from the environment; `None` when no key is set.
    pub fn from_env() -> Option<Self> {
        let key = std::env::var(API_KEY_ENV)
            .or_else(|_| std::env::var("OPENAI_API_KEY"))
            .ok()
            .filter(|k| !k.trim().is_empty())?;
        let base = std::env::var(API_BASE_ENV).unwrap_or_else(|_| DEFAULT_BASE.to_string());
        Some(Self::new(&base, &key, Duration::from_secs(120)))
    }

    fn body(req: &CompletionRequest) -> Value {
        let mut messages = Vec::new();
        if !req.system.is_empty() {
            messages.push(json!({"role": "system", "content": req.system}));
        }
        messages.push(json!({"role": "user", "content": req.prompt}));
        let mut body = json!({"model": req.binding.model_id, "messages": messages});
        if let Some(t) = req.binding.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(e) = req.binding.reasoning_effort {
            body["reasoning_effort"] = json!(e.as_str());
        }
        body
    }
}

impl Provider for OpenAiCompatible {
    fn name(&self) -> &str {
        "openai-compatible"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<ProviderReply, GatewayError> {
        let url = format!("{}/chat/completions", self.base_url);
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(Self::body(req))
            .map_err(|e| GatewayError::provider(format!("request failed: {e}"), true))?;
        let status = resp.status().as_u16();
        let v: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| GatewayError::provider(format!("unreadable response (HTTP {status}): {e}"), status >= 500))?;
        if status != 200 {
            let retryable = status == 429 || status >= 500;
            return Err(GatewayError::provider(
                format!("HTTP {status}: {}", v["error"]["message"]),
                retryable,
            ));
        }
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| GatewayError::provider("response has no message content", true))?
            .to_string();
        let fallback = ProviderReply::estimated(req, text.clone());
        Ok(ProviderReply {
            token_in: v["usage"]["prompt_tokens"].as_u64().unwrap_or(fallback.token_in),
            token_out: v["usage"]["completion_tokens"].as_u64().unwrap_or(fallback.token_out),
            text,
        })
    }
}
