//! Provider-agnostic LLM gateway: templating, structured-output parsing,
//! bounded retries, and a global in-flight cap.

mod mock;
mod prompts;
mod provider;
pub mod schema;
pub mod template;

pub use mock::{variable_hash, CallRecord, MockProvider};
#[cfg(feature = "http")]
pub use provider::HttpProvider;
pub use provider::{Provider, ProviderRequest};
pub use template::{PromptTemplate, REGISTRY};

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};

use serde_json::Value;

use crate::error::{Error, Result};

/// Variable map passed to prompt rendering.
pub type Vars = BTreeMap<String, String>;

/// Build a [`Vars`] map from `(name, value)` pairs.
pub fn vars<const N: usize>(pairs: [(&str, String); N]) -> Vars {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// A parsed structured completion.
#[derive(Debug, Clone)]
pub struct StructuredResponse {
    /// Raw text of the accepted response.
    pub raw: String,
    /// Schema-validated JSON value.
    pub parsed: Value,
    /// Calls made before validation succeeded (>= 1).
    pub attempts: u32,
}

/// Gateway configuration knobs.
#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Retries after the first failed validation.
    pub max_retries: u32,
    /// Global cap on concurrently executing provider calls.
    pub max_in_flight: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            model_name: "default".to_string(),
            temperature: 0.0,
            max_tokens: 2048,
            max_retries: 2,
            max_in_flight: 8,
        }
    }
}

/// Shared gateway. Cheap to clone across worker threads; all clones share the
/// provider and the in-flight limiter.
#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn Provider>,
    config: GatewayConfig,
    limiter: Arc<Semaphore>,
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>, config: GatewayConfig) -> Self {
        let limiter = Arc::new(Semaphore::new(config.max_in_flight.max(1)));
        Self {
            provider,
            config,
            limiter,
        }
    }

    pub fn with_mock(mock: MockProvider) -> Self {
        Self::new(Arc::new(mock), GatewayConfig::default())
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// Render a registry template and parse the completion against its schema.
    ///
    /// On validation failure the call is retried up to `max_retries` times
    /// with a repair instruction appended to the prompt; the final failure
    /// surfaces the raw response text.
    pub fn complete_structured(&self, template_id: &str, variables: &Vars) -> Result<StructuredResponse> {
        let template = template::lookup(template_id)?;
        self.complete_structured_with(template, variables)
    }

    /// Same as [`Gateway::complete_structured`] for a template outside the
    /// shared registry (module-local prompts).
    pub fn complete_structured_with(
        &self,
        template: &PromptTemplate,
        variables: &Vars,
    ) -> Result<StructuredResponse> {
        let prompt = template::render(template.template_id, template.body, variables)?;
        let max_attempts = 1 + self.config.max_retries;
        let mut last_failure = String::new();
        let mut raw = String::new();
        for attempt in 1..=max_attempts {
            let prompt_text = if attempt == 1 {
                prompt.clone()
            } else {
                format!(
                    "{prompt}\n\nYour previous reply could not be used ({last_failure}). \
                     Return ONLY the JSON object in the required shape."
                )
            };
            raw = self.call(template.template_id, &prompt_text, variables, attempt)?;
            let candidate = strip_code_fences(&raw);
            match serde_json::from_str::<Value>(candidate) {
                Ok(value) => match template.expected_schema.validate(&value) {
                    Ok(()) => {
                        return Ok(StructuredResponse {
                            raw,
                            parsed: value,
                            attempts: attempt,
                        })
                    }
                    Err(reason) => last_failure = reason,
                },
                Err(e) => last_failure = format!("not valid JSON: {e}"),
            }
        }
        Err(Error::SchemaValidation {
            template_id: template.template_id.to_string(),
            attempts: max_attempts,
            reason: last_failure,
            raw,
        })
    }

    /// Raw text completion for prompts without a structured return shape.
    /// `template_id` is metadata so mocks can key on it.
    pub fn complete_text(&self, template_id: &str, body: &str, variables: &Vars) -> Result<String> {
        let prompt = template::render(template_id, body, variables)?;
        self.call(template_id, &prompt, variables, 1)
    }

    fn call(
        &self,
        template_id: &str,
        prompt_text: &str,
        variables: &Vars,
        attempt: u32,
    ) -> Result<String> {
        let _permit = self.limiter.acquire();
        self.provider.complete(&ProviderRequest {
            model_name: &self.config.model_name,
            prompt_text,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            template_id,
            variables,
            attempt,
        })
    }
}

/// Strip a surrounding markdown code fence (with optional language tag).
pub fn strip_code_fences(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    // Drop the language tag line, then the closing fence.
    let body = match rest.split_once('\n') {
        Some((_tag, body)) => body,
        None => return trimmed,
    };
    let body = body.trim_end();
    let body = body.strip_suffix("```").unwrap_or(body);
    body.trim()
}

/// Counting semaphore used to cap in-flight provider calls.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut permits = self.0.permits.lock().unwrap();
        *permits += 1;
        self.0.available.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn gateway_with(mock: MockProvider) -> Gateway {
        Gateway::with_mock(mock)
    }

    #[test]
    fn valid_response_parses_on_first_attempt() {
        let mock = MockProvider::new().respond(
            "turn_diversity",
            json!({"adds_value": true, "value_type": "new_facts", "reason": "r"}),
        );
        let gw = gateway_with(mock);
        let vars = vars([
            ("previous_content", "Q: a\nA: b".into()),
            ("new_answer", "c".into()),
        ]);
        let resp = gw.complete_structured("turn_diversity", &vars).unwrap();
        assert_eq!(resp.attempts, 1);
        assert_eq!(resp.parsed["value_type"], "new_facts");
    }

    #[test]
    fn prose_then_valid_object_takes_two_attempts() {
        let mock = MockProvider::new()
            .rule_on_attempt(
                "turn_diversity",
                2,
                json!({"adds_value": false, "value_type": "repetitive"}),
            )
            .respond("turn_diversity", json!("Sure! Here is my analysis of the answer."));
        let gw = gateway_with(mock);
        let vars = vars([
            ("previous_content", "x".into()),
            ("new_answer", "y".into()),
        ]);
        let resp = gw.complete_structured("turn_diversity", &vars).unwrap();
        assert_eq!(resp.attempts, 2);
        assert_eq!(resp.parsed["adds_value"], false);
    }

    #[test]
    fn fenced_responses_are_stripped() {
        for fixture in [
            "```json\n{\"adds_value\": true, \"value_type\": \"example\"}\n```",
            "```\n{\"adds_value\": true, \"value_type\": \"example\"}\n```",
            "  ```json\n{\"adds_value\": true, \"value_type\": \"example\"}\n```  ",
        ] {
            // Oracle: the hand-stripped equivalent of each fixture string.
            assert_eq!(
                strip_code_fences(fixture),
                "{\"adds_value\": true, \"value_type\": \"example\"}"
            );
            let gw = gateway_with(MockProvider::new().respond_seq("turn_diversity", [fixture]));
            let vars = vars([
                ("previous_content", "x".into()),
                ("new_answer", "y".into()),
            ]);
            let resp = gw.complete_structured("turn_diversity", &vars).unwrap();
            assert_eq!(resp.parsed["adds_value"], true);
        }
    }

    #[test]
    fn missing_placeholder_is_a_template_error() {
        let gw = gateway_with(MockProvider::new());
        let vars = vars([("previous_content", "x".into())]);
        let err = gw.complete_structured("turn_diversity", &vars).unwrap_err();
        assert!(matches!(err, Error::UnboundPlaceholder { .. }));
    }

    #[test]
    fn exhausted_retries_surface_raw_text() {
        let mock = MockProvider::new().respond("turn_diversity", json!("still not json"));
        let gw = gateway_with(mock);
        let vars = vars([
            ("previous_content", "x".into()),
            ("new_answer", "y".into()),
        ]);
        match gw.complete_structured("turn_diversity", &vars) {
            Err(Error::SchemaValidation { attempts, raw, .. }) => {
                assert_eq!(attempts, 3);
                assert!(raw.contains("still not json"));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn in_flight_cap_is_never_exceeded() {
        let mock = Arc::new(
            MockProvider::new()
                .respond(
                    "turn_diversity",
                    json!({"adds_value": true, "value_type": "new_facts"}),
                )
                .with_latency(std::time::Duration::from_millis(3)),
        );
        let gw = Gateway::new(
            mock.clone() as Arc<dyn Provider>,
            GatewayConfig {
                max_in_flight: 3,
                ..Default::default()
            },
        );
        let threads: Vec<_> = (0..12)
            .map(|i| {
                let gw = gw.clone();
                std::thread::spawn(move || {
                    let vars = vars([
                        ("previous_content", format!("h{i}")),
                        ("new_answer", format!("a{i}")),
                    ]);
                    gw.complete_structured("turn_diversity", &vars).unwrap();
                })
            })
            .collect();
        for t in threads {
            t.join().unwrap();
        }
        assert!(mock.max_in_flight() <= 3, "observed {}", mock.max_in_flight());
        assert_eq!(mock.call_count(), 12);
    }

    #[test]
    fn mock_driven_calls_are_reproducible() {
        let build = || {
            MockProvider::new().respond(
                "turn_diversity",
                json!({"adds_value": true, "value_type": "deepening"}),
            )
        };
        let run = |gw: &Gateway| {
            let vars = vars([
                ("previous_content", "h".into()),
                ("new_answer", "a".into()),
            ]);
            gw.complete_structured("turn_diversity", &vars).unwrap().raw
        };
        let a = run(&gateway_with(build()));
        let b = run(&gateway_with(build()));
        assert_eq!(a, b);
    }
}
