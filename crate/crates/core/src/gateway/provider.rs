//! Model provider contract and the HTTP-backed implementation.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// One completion request. `template_id`, `variables`, and `attempt` are
/// call metadata: HTTP providers ignore them, deterministic mocks key on them.
#[derive(Debug, Clone)]
pub struct ProviderRequest<'a> {
    pub model_name: &'a str,
    pub prompt_text: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
    pub template_id: &'a str,
    pub variables: &'a BTreeMap<String, String>,
    pub attempt: u32,
}

/// Text-completion backend. Implementations must be shareable across worker
/// threads.
pub trait Provider: Send + Sync {
    fn complete(&self, request: &ProviderRequest<'_>) -> Result<String>;

    fn name(&self) -> &str {
        "provider"
    }
}

/// Provider speaking the wire contract
/// `{model_name, prompt_text, temperature, max_tokens}` -> `{text}`.
#[cfg(feature = "http")]
pub struct HttpProvider {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl HttpProvider {
    /// `api_key` normally comes from the `PROVIDER_API_KEY` environment
    /// variable; see [`crate::config::RunConfig`].
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key,
            agent: ureq::Agent::new_with_defaults(),
        }
    }
}

#[cfg(feature = "http")]
impl Provider for HttpProvider {
    fn complete(&self, request: &ProviderRequest<'_>) -> Result<String> {
        #[derive(serde::Serialize)]
        struct Body<'a> {
            model_name: &'a str,
            prompt_text: &'a str,
            temperature: f64,
            max_tokens: u32,
        }
        #[derive(serde::Deserialize)]
        struct Reply {
            text: String,
        }
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("authorization", &format!("Bearer {key}"));
        }
        let reply: Reply = req
            .send_json(Body {
                model_name: request.model_name,
                prompt_text: request.prompt_text,
                temperature: request.temperature,
                max_tokens: request.max_tokens,
            })
            .map_err(|e| Error::Provider(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| Error::Provider(format!("invalid provider reply: {e}")))?;
        Ok(reply.text)
    }

    fn name(&self) -> &str {
        "http"
    }
}
