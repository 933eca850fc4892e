//! Deterministic mock provider.
//!
//! Responses are resolved purely from `(template_id, variables, attempt)` so
//! any pipeline driven by the mock is bit-reproducible across runs and thread
//! schedules. Lookup order per call:
//!
//! 1. exact entry keyed by [`variable_hash`],
//! 2. first matching rule (substring conditions on variables, optional
//!    attempt condition),
//! 3. scripted per-template sequence (single-threaded tests only),
//! 4. per-template default.
//!
//! Rules and defaults may substitute `{variable}` placeholders into the
//! response text. A fixture directory holds one JSON file per template id:
//!
//! ```json
//! {
//!   "rules": [
//!     {"when": {"aspect_name": "Extrinsic mortality"}, "response": {...}},
//!     {"when": {}, "attempt": 2, "response": "retry payload"}
//!   ],
//!   "default": {"response": {...}, "substitute": true},
//!   "exact": {"<hash>": {...}}
//! }
//! ```

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;
use serde_json::Value;

use super::provider::{Provider, ProviderRequest};
use crate::error::{Error, Result};

/// Stable 16-hex-char key over the call variables.
pub fn variable_hash(variables: &BTreeMap<String, String>) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    for (k, v) in variables {
        hasher.update(k.as_bytes());
        hasher.update([0x1f]);
        hasher.update(v.as_bytes());
        hasher.update([0x1e]);
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Deserialize)]
struct FixtureRule {
    /// Substring conditions, all of which must match the named variables.
    #[serde(default)]
    when: BTreeMap<String, String>,
    /// Restrict the rule to one retry attempt (1-based).
    #[serde(default)]
    attempt: Option<u32>,
    response: Value,
    #[serde(default)]
    substitute: bool,
}

#[derive(Debug, Clone, Deserialize)]
struct FixtureDefault {
    response: Value,
    #[serde(default)]
    substitute: bool,
}

#[derive(Debug, Clone, Deserialize, Default)]
struct FixtureFile {
    #[serde(default)]
    rules: Vec<FixtureRule>,
    #[serde(default)]
    default: Option<FixtureDefault>,
    #[serde(default)]
    exact: BTreeMap<String, Value>,
}

/// One observed call, for assertions on traffic.
#[derive(Debug, Clone)]
pub struct CallRecord {
    pub template_id: String,
    pub attempt: u32,
}

/// Fixture-driven deterministic provider.
#[derive(Default)]
pub struct MockProvider {
    fixtures: HashMap<String, FixtureFile>,
    sequences: Mutex<HashMap<String, VecDeque<String>>>,
    calls: Mutex<Vec<CallRecord>>,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    latency: Option<Duration>,
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    /// Load every `<template_id>.json` fixture in a directory.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut mock = Self::new();
        let mut entries: Vec<_> = std::fs::read_dir(dir)?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        entries.sort();
        for path in entries {
            let template_id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Config(format!("bad fixture filename {path:?}")))?
                .to_string();
            let file: FixtureFile = serde_json::from_str(&std::fs::read_to_string(&path)?)
                .map_err(|e| Error::Config(format!("fixture {path:?}: {e}")))?;
            mock.fixtures.insert(template_id, file);
        }
        Ok(mock)
    }

    /// Sticky default response for a template.
    pub fn respond(mut self, template_id: &str, response: Value) -> Self {
        self.fixtures.entry(template_id.to_string()).or_default().default =
            Some(FixtureDefault {
                response,
                substitute: false,
            });
        self
    }

    /// Default response with `{variable}` substitution.
    pub fn respond_template(mut self, template_id: &str, response: &str) -> Self {
        self.fixtures.entry(template_id.to_string()).or_default().default =
            Some(FixtureDefault {
                response: Value::String(response.to_string()),
                substitute: true,
            });
        self
    }

    /// Scripted responses consumed in order. Not parallel-safe; meant for
    /// single-threaded retry tests.
    pub fn respond_seq<I>(self, template_id: &str, responses: I) -> Self
    where
        I: IntoIterator,
        I::Item: Into<String>,
    {
        self.sequences
            .lock()
            .unwrap()
            .entry(template_id.to_string())
            .or_default()
            .extend(responses.into_iter().map(Into::into));
        self
    }

    /// Response for calls whose variable `var` contains `needle`.
    pub fn rule(self, template_id: &str, var: &str, needle: &str, response: Value) -> Self {
        self.rule_when(template_id, &[(var, needle)], response)
    }

    /// Response for calls where every `(var, needle)` condition matches.
    pub fn rule_when(mut self, template_id: &str, when: &[(&str, &str)], response: Value) -> Self {
        self.fixtures
            .entry(template_id.to_string())
            .or_default()
            .rules
            .push(FixtureRule {
                when: when
                    .iter()
                    .map(|(var, needle)| (var.to_string(), needle.to_string()))
                    .collect(),
                attempt: None,
                response,
                substitute: false,
            });
        self
    }

    /// Response reserved for a specific retry attempt (1-based).
    pub fn rule_on_attempt(mut self, template_id: &str, attempt: u32, response: Value) -> Self {
        self.fixtures
            .entry(template_id.to_string())
            .or_default()
            .rules
            .push(FixtureRule {
                when: BTreeMap::new(),
                attempt: Some(attempt),
                response,
                substitute: false,
            });
        self
    }

    /// Exact-match response keyed by [`variable_hash`].
    pub fn exact(mut self, template_id: &str, variables: &BTreeMap<String, String>, response: Value) -> Self {
        self.fixtures
            .entry(template_id.to_string())
            .or_default()
            .exact
            .insert(variable_hash(variables), response);
        self
    }

    /// Artificial per-call latency, for concurrency-cap assertions.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = Some(latency);
        self
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.calls.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }

    /// Highest number of concurrently executing calls observed.
    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    fn resolve(&self, request: &ProviderRequest<'_>) -> Option<String> {
        let fixture = self.fixtures.get(request.template_id);
        if let Some(fixture) = fixture {
            let hash = variable_hash(request.variables);
            if let Some(value) = fixture.exact.get(&hash) {
                return Some(render_value(value, request.variables, false));
            }
            for rule in &fixture.rules {
                if let Some(required_attempt) = rule.attempt {
                    if required_attempt != request.attempt {
                        continue;
                    }
                }
                let matches = rule.when.iter().all(|(var, needle)| {
                    request
                        .variables
                        .get(var)
                        .is_some_and(|value| value.contains(needle.as_str()))
                });
                if matches {
                    return Some(render_value(&rule.response, request.variables, rule.substitute));
                }
            }
        }
        if let Some(seq) = self.sequences.lock().unwrap().get_mut(request.template_id) {
            if let Some(next) = seq.pop_front() {
                return Some(next);
            }
        }
        fixture
            .and_then(|f| f.default.as_ref())
            .map(|d| render_value(&d.response, request.variables, d.substitute))
    }
}

/// Serialize the fixture response, optionally substituting `{var}` markers.
/// Substituted values are JSON-string-escaped so they stay valid inside
/// string literals of a JSON response.
fn render_value(value: &Value, variables: &BTreeMap<String, String>, substitute: bool) -> String {
    let is_json = !value.is_string();
    let mut text = match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    if substitute {
        for (name, val) in variables {
            let marker = format!("{{{name}}}");
            if text.contains(&marker) {
                let replacement = if is_json {
                    let quoted = serde_json::to_string(val).unwrap();
                    quoted[1..quoted.len() - 1].to_string()
                } else {
                    val.clone()
                };
                text = text.replace(&marker, &replacement);
            }
        }
    }
    text
}

impl Provider for MockProvider {
    fn complete(&self, request: &ProviderRequest<'_>) -> Result<String> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        if let Some(latency) = self.latency {
            std::thread::sleep(latency);
        }
        self.calls.lock().unwrap().push(CallRecord {
            template_id: request.template_id.to_string(),
            attempt: request.attempt,
        });
        let result = self.resolve(request);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result.ok_or_else(|| Error::FixtureMissing {
            template_id: request.template_id.to_string(),
            attempt: request.attempt,
        })
    }

    fn name(&self) -> &str {
        "mock"
    }
}
