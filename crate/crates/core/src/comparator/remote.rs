use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Comparator, ComparatorError, ComparisonOutcome, SlotAssignment};
use crate::model::{Corpus, Query};
use crate::prompt::PromptTemplate;

/// Text produced by a completion backend for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub output_tokens: u32,
    pub latency_seconds: f64,
}

/// Anything that turns a rendered prompt into a single-token completion.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<Completion, ComparatorError>;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Arc<B> {
    fn complete(&self, prompt: &str) -> Result<Completion, ComparatorError> {
        (**self).complete(prompt)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for &B {
    fn complete(&self, prompt: &str) -> Result<Completion, ComparatorError> {
        (**self).complete(prompt)
    }
}

fn default_field_path() -> String {
    "choices.0.text".to_owned()
}

fn default_timeout() -> f64 {
    30.0
}

fn default_retries() -> u32 {
    2
}

/// Settings for a generic completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    /// Environment variable that, when set, replaces `endpoint`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_env: Option<String>,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    /// Header name to environment variable holding its value (for secrets).
    #[serde(default)]
    pub header_env: BTreeMap<String, String>,
    /// Dotted path to the generated text; numeric segments index arrays.
    #[serde(default = "default_field_path")]
    pub response_field: String,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: f64,
    /// Extra attempts after a transport failure. Parse failures never retry.
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Opaque backend metadata carried into reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<String>,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            endpoint_env: None,
            headers: BTreeMap::new(),
            header_env: BTreeMap::new(),
            response_field: default_field_path(),
            timeout_seconds: default_timeout(),
            max_retries: default_retries(),
            model: None,
            precision: None,
        }
    }
}

/// Blocking HTTP client for [`RemoteConfig`]. Every request asks for exactly
/// one token, greedy, at temperature zero.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    headers: Vec<(String, String)>,
    field_path: Vec<String>,
    max_retries: u32,
}

impl HttpBackend {
    pub fn new(config: &RemoteConfig) -> Result<Self, ComparatorError> {
        if config.timeout_seconds.is_nan() || config.timeout_seconds <= 0.0 {
            return Err(ComparatorError::Config("timeout_seconds must be positive".into()));
        }
        let endpoint = config
            .endpoint_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
            .unwrap_or_else(|| config.endpoint.clone());
        let mut headers: Vec<(String, String)> = config.headers.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        for (name, var) in &config.header_env {
            let value = std::env::var(var).map_err(|_| {
                ComparatorError::Config(format!("environment variable {var} for header {name} is not set"))
            })?;
            headers.retain(|(k, _)| !k.eq_ignore_ascii_case(name));
            headers.push((name.clone(), value));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_seconds))
            .build()
            .map_err(|e| ComparatorError::Config(e.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint,
            headers,
            field_path: config.response_field.split('.').map(str::to_owned).collect(),
            max_retries: config.max_retries,
        })
    }

    pub fn request_body(prompt: &str) -> Value {
        json!({ "prompt": prompt, "max_tokens": 1, "temperature": 0.0 })
    }

    fn attempt(&self, body: &Value) -> Result<Value, Attempt> {
        let mut req = self.client.post(&self.endpoint).json(body);
        for (k, v) in &self.headers {
            req = req.header(k, v);
        }
        let resp = req.send().map_err(Attempt::from_reqwest)?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP {}", status.as_u16())));
        }
        let text = resp.text().map_err(Attempt::from_reqwest)?;
        if !status.is_success() {
            return Err(Attempt::Fatal(ComparatorError::Status {
                status: status.as_u16(),
                body: text,
            }));
        }
        serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(ComparatorError::Protocol(format!("response is not JSON: {e}"))))
    }
}

enum Attempt {
    Retry(String),
    Timeout,
    Fatal(ComparatorError),
}

impl Attempt {
    fn from_reqwest(e: reqwest::Error) -> Self {
        if e.is_timeout() {
            Attempt::Timeout
        } else {
            Attempt::Retry(e.to_string())
        }
    }
}

/// Follows a dotted path through objects and arrays.
pub(crate) fn lookup_path<'v>(value: &'v Value, path: &[String]) -> Option<&'v Value> {
    path.iter().try_fold(value, |v, seg| match v {
        Value::Object(map) => map.get(seg),
        Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get(i)),
        _ => None,
    })
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, prompt: &str) -> Result<Completion, ComparatorError> {
        let body = Self::request_body(prompt);
        let started = Instant::now();
        let mut attempts = 0u32;
        let value = loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok(v) => break v,
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(failure) if attempts > self.max_retries => {
                    return Err(match failure {
                        Attempt::Timeout => ComparatorError::Timeout { attempts },
                        Attempt::Retry(message) => ComparatorError::Transport { attempts, message },
                        Attempt::Fatal(e) => e,
                    });
                }
                Err(failure) => {
                    if let Attempt::Retry(msg) = &failure {
                        log::debug!("attempt {attempts} to {} failed: {msg}", self.endpoint);
                    }
                }
            }
        };
        let text = lookup_path(&value, &self.field_path)
            .and_then(Value::as_str)
            .ok_or_else(|| {
                ComparatorError::Protocol(format!("no string at field path {:?}", self.field_path.join(".")))
            })?
            .to_owned();
        let output_tokens = value
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .map_or(1, |n| n.max(1) as u32);
        Ok(Completion {
            text,
            output_tokens,
            latency_seconds: started.elapsed().as_secs_f64(),
        })
    }
}

/// Comparator that renders a template with the slot passages and asks a
/// completion backend for the single answer token.
pub struct RemoteComparator<B> {
    backend: B,
    template: PromptTemplate,
    corpus: Arc<Corpus>,
}

impl<B: CompletionBackend> RemoteComparator<B> {
    pub fn new(backend: B, template: PromptTemplate, corpus: Arc<Corpus>) -> Self {
        RemoteComparator {
            backend,
            template,
            corpus,
        }
    }

    fn text_of(&self, doc_id: &str) -> Result<&str, ComparatorError> {
        self.corpus
            .get(doc_id)
            .map(|d| d.text.as_str())
            .ok_or_else(|| ComparatorError::MissingDocument(doc_id.to_owned()))
    }
}

impl<B: CompletionBackend> Comparator for RemoteComparator<B> {
    fn compare(&self, query: &Query, assignment: &SlotAssignment) -> Result<ComparisonOutcome, ComparatorError> {
        let prompt = self.template.render(
            &query.text,
            self.text_of(&assignment.slot_a)?,
            self.text_of(&assignment.slot_b)?,
        );
        let completion = self.backend.complete(&prompt)?;
        Ok(ComparisonOutcome {
            winner: self.template.parse_response(&completion.text),
            raw_response: completion.text,
            latency_seconds: completion.latency_seconds,
            output_tokens: completion.output_tokens,
        })
    }

    fn prompt_name(&self) -> &str {
        &self.template.name
    }
}
