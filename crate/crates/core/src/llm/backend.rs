use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::PromptEnvelope;
use crate::error::LlmError;

#[derive(Debug, Clone, PartialEq)]
pub enum BackendError {
    /// Worth retrying: timeouts, rate limits, 5xx.
    Transient(String),
    Fatal(LlmError),
}

pub trait LlmBackend: Send + Sync + fmt::Debug {
    fn id(&self) -> &str;
    fn call(&self, envelope: &PromptEnvelope) -> Result<String, BackendError>;
}

// ---------------------------------------------------------------------------
// Scripted backend

fn response_text<'de, D: serde::Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    Ok(match Value::deserialize(d)? {
        Value::String(s) => s,
        other => other.to_string(),
    })
}

/// One canned reply. All present matchers must hold; `call` is the 1-based
/// count of requests seen so far for this template in the current session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    pub template: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    /// A string is returned verbatim; any other JSON value is returned as
    /// its compact serialization.
    #[serde(deserialize_with = "response_text")]
    pub response: String,
}

impl ScriptRule {
    pub fn new(template: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            template: template.into(),
            fingerprint: None,
            call: None,
            contains: None,
            response: response.into(),
        }
    }

    pub fn on_call(mut self, n: u64) -> Self {
        self.call = Some(n);
        self
    }

    pub fn containing(mut self, needle: impl Into<String>) -> Self {
        self.contains = Some(needle.into());
        self
    }

    fn matches(&self, envelope: &PromptEnvelope, call: u64) -> bool {
        self.template == envelope.template_id
            && self.fingerprint.as_ref().is_none_or(|f| *f == envelope.context_fingerprint)
            && self.call.is_none_or(|c| c == call)
            && self
                .contains
                .as_ref()
                .is_none_or(|needle| envelope.rendered_text.contains(needle.as_str()))
    }
}

/// Ordered rule table; the first matching rule wins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedRules {
    pub rules: Vec<ScriptRule>,
}

impl ScriptedRules {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        Self { rules }
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))
    }

    pub fn push(&mut self, rule: ScriptRule) {
        self.rules.push(rule);
    }
}

/// Deterministic canned-response backend. The rule table is shared and
/// immutable; only the per-template call counters belong to the session.
#[derive(Debug)]
pub struct ScriptedBackend {
    id: String,
    rules: Arc<ScriptedRules>,
    calls: Mutex<HashMap<String, u64>>,
}

impl ScriptedBackend {
    pub fn new(rules: Arc<ScriptedRules>) -> Self {
        Self {
            id: "scripted".to_string(),
            rules,
            calls: Mutex::new(HashMap::new()),
        }
    }

    pub fn calls_for(&self, template_id: &str) -> u64 {
        self.calls.lock().unwrap().get(template_id).copied().unwrap_or(0)
    }
}

impl LlmBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn call(&self, envelope: &PromptEnvelope) -> Result<String, BackendError> {
        let call = {
            let mut calls = self.calls.lock().unwrap();
            let n = calls.entry(envelope.template_id.clone()).or_insert(0);
            *n += 1;
            *n
        };
        self.rules
            .rules
            .iter()
            .find(|r| r.matches(envelope, call))
            .map(|r| r.response.clone())
            .ok_or_else(|| {
                BackendError::Fatal(LlmError::NoScriptMatch {
                    template_id: envelope.template_id.clone(),
                })
            })
    }
}

// ---------------------------------------------------------------------------
// Remote backend

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Chat-completions endpoint URL.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    #[serde(default = "default_token_env")]
    pub token_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_token_env() -> String {
    "API_TOKEN".to_string()
}

fn default_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    Timeout,
    Status(u16, String),
    Connection(String),
    Decode(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            TransportError::Timeout | TransportError::Connection(_) => true,
            TransportError::Status(code, _) => *code == 429 || *code >= 500,
            TransportError::Decode(_) => false,
        }
    }
}

impl fmt::Display for TransportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransportError::Timeout => f.write_str("request timed out"),
            TransportError::Status(code, body) => write!(f, "HTTP {code}: {body}"),
            TransportError::Connection(e) => write!(f, "connection failed: {e}"),
            TransportError::Decode(e) => write!(f, "undecodable response: {e}"),
        }
    }
}

pub trait Transport: Send + Sync + fmt::Debug {
    fn post_json(
        &self,
        url: &str,
        bearer: &str,
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, TransportError>;
}

#[derive(Debug, Default)]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: &str,
        body: &Value,
        timeout: Duration,
    ) -> Result<Value, TransportError> {
        let resp = self
            .client
            .post(url)
            .bearer_auth(bearer)
            .timeout(timeout)
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    TransportError::Timeout
                } else {
                    TransportError::Connection(e.to_string())
                }
            })?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(TransportError::Status(status.as_u16(), text));
        }
        resp.json::<Value>().map_err(|e| TransportError::Decode(e.to_string()))
    }
}

/// OpenAI-style chat-completions adapter.
#[derive(Debug)]
pub struct RemoteBackend {
    id: String,
    config: RemoteConfig,
    transport: Box<dyn Transport>,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        Self::with_transport(config, Box::new(HttpTransport::default()))
    }

    pub fn with_transport(config: RemoteConfig, transport: Box<dyn Transport>) -> Self {
        Self {
            id: format!("remote:{}", config.model),
            config,
            transport,
        }
    }

    fn request_body(&self, envelope: &PromptEnvelope) -> Value {
        json!({
            "model": self.config.model,
            "temperature": envelope.temperature,
            "messages": [{ "role": "user", "content": envelope.full_text() }],
        })
    }
}

impl LlmBackend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn call(&self, envelope: &PromptEnvelope) -> Result<String, BackendError> {
        let token = std::env::var(&self.config.token_env).map_err(|_| {
            BackendError::Fatal(LlmError::Config(format!(
                "environment variable {} is not set",
                self.config.token_env
            )))
        })?;
        let body = self.request_body(envelope);
        let timeout = Duration::from_secs(self.config.timeout_secs);
        match self.transport.post_json(&self.config.endpoint, &token, &body, timeout) {
            Ok(v) => v["choices"][0]["message"]["content"]
                .as_str()
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .ok_or_else(|| BackendError::Transient("response carried no content".to_string())),
            Err(e) if e.retryable() => Err(BackendError::Transient(e.to_string())),
            Err(e) => Err(BackendError::Fatal(LlmError::BackendUnavailable {
                backend: self.id.clone(),
                attempts: 1,
                reason: e.to_string(),
            })),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::prompt::{Attachment, PromptLibrary};
    use std::collections::BTreeMap;

    fn envelope(template: &str, text: &str) -> PromptEnvelope {
        let mut lib = PromptLibrary::default();
        lib.insert(template, text);
        lib.render(template, &BTreeMap::new(), vec![Attachment::new("a", "1")]).unwrap()
    }

    #[test]
    fn first_match_wins_and_is_verbatim() {
        let rules = ScriptedRules::new(vec![
            ScriptRule::new("router", r#"{"route":"end"}"#),
            ScriptRule::new("router", r#"{"route":"news"}"#),
        ]);
        let b = ScriptedBackend::new(Arc::new(rules));
        assert_eq!(b.call(&envelope("router", "x")).unwrap(), r#"{"route":"end"}"#);
    }

    #[test]
    fn unmatched_template_errors() {
        let b = ScriptedBackend::new(Arc::new(ScriptedRules::default()));
        assert_eq!(
            b.call(&envelope("market", "x")).unwrap_err(),
            BackendError::Fatal(LlmError::NoScriptMatch { template_id: "market".into() })
        );
    }

    #[test]
    fn call_and_contains_matchers() {
        let rules = ScriptedRules::new(vec![
            ScriptRule::new("router", "first").on_call(1),
            ScriptRule::new("news_headline", "tariff").containing("tariff"),
            ScriptRule::new("router", "later"),
            ScriptRule::new("news_headline", "other"),
        ]);
        let b = ScriptedBackend::new(Arc::new(rules));
        assert_eq!(b.call(&envelope("router", "x")).unwrap(), "first");
        assert_eq!(b.call(&envelope("router", "x")).unwrap(), "later");
        assert_eq!(b.call(&envelope("news_headline", "EU tariff vote")).unwrap(), "tariff");
        assert_eq!(b.call(&envelope("news_headline", "new model")).unwrap(), "other");
        assert_eq!(b.calls_for("router"), 2);
    }

    #[test]
    fn fingerprint_matcher() {
        let env = envelope("critic", "x");
        let mut rule = ScriptRule::new("critic", "match");
        rule.fingerprint = Some(env.context_fingerprint.clone());
        let mut other = ScriptRule::new("critic", "nope");
        other.fingerprint = Some("00".into());
        let b = ScriptedBackend::new(Arc::new(ScriptedRules::new(vec![other, rule])));
        assert_eq!(b.call(&env).unwrap(), "match");
    }

    #[test]
    fn rule_file_accepts_object_responses() {
        let rules: ScriptedRules = serde_json::from_str(
            r#"{"rules":[{"template":"router","response":{"route":"end"}},
                         {"template":"market","call":2,"response":"text"}]}"#,
        )
        .unwrap();
        assert_eq!(rules.rules[0].response, r#"{"route":"end"}"#);
        assert_eq!(rules.rules[1].call, Some(2));
    }

    #[derive(Debug)]
    struct Canned(Result<Value, TransportError>);

    impl Transport for Canned {
        fn post_json(&self, _: &str, _: &str, body: &Value, _: Duration) -> Result<Value, TransportError> {
            assert_eq!(body["model"], "m");
            self.0.clone()
        }
    }

    fn remote(result: Result<Value, TransportError>) -> RemoteBackend {
        let cfg = RemoteConfig {
            endpoint: "http://localhost/v1/chat/completions".into(),
            model: "m".into(),
            token_env: "PATH".into(),
            timeout_secs: 1,
        };
        RemoteBackend::with_transport(cfg, Box::new(Canned(result)))
    }

    #[test]
    fn remote_extracts_content() {
        let b = remote(Ok(json!({"choices":[{"message":{"content":"hi"}}]})));
        assert_eq!(b.call(&envelope("t", "x")).unwrap(), "hi");
    }

    #[test]
    fn remote_classifies_errors() {
        assert!(matches!(
            remote(Err(TransportError::Timeout)).call(&envelope("t", "x")),
            Err(BackendError::Transient(_))
        ));
        assert!(matches!(
            remote(Err(TransportError::Status(503, String::new()))).call(&envelope("t", "x")),
            Err(BackendError::Transient(_))
        ));
        assert!(matches!(
            remote(Err(TransportError::Status(401, String::new()))).call(&envelope("t", "x")),
            Err(BackendError::Fatal(_))
        ));
    }
}
