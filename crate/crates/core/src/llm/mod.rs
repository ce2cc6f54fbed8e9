//! Single completion interface shared by every agent: template rendering,
//! a per-role backend registry with bounded retries, and structured-output
//! parsing with bounded re-prompts.

pub mod backend;
pub mod prompt;
pub mod structured;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use backend::{
    BackendError, LlmBackend, RemoteBackend, RemoteConfig, ScriptRule, ScriptedBackend,
    ScriptedRules, Transport, TransportError,
};
pub use prompt::{context, Attachment, PromptEnvelope, PromptLibrary};
pub use structured::{parse_as, parse_structured, Structured, StructuredOutput};

use crate::error::LlmError;

pub const MAX_ATTEMPTS: u32 = 3;
pub const MAX_REPROMPTS: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Market,
    Sensitivity,
    Consensus,
    Comparables,
    News,
    Router,
    Writer,
    Critic,
}

impl AgentRole {
    pub const ALL: [AgentRole; 8] = [
        AgentRole::Market,
        AgentRole::Sensitivity,
        AgentRole::Consensus,
        AgentRole::Comparables,
        AgentRole::News,
        AgentRole::Router,
        AgentRole::Writer,
        AgentRole::Critic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Market => "market",
            AgentRole::Sensitivity => "sensitivity",
            AgentRole::Consensus => "consensus",
            AgentRole::Comparables => "comparables",
            AgentRole::News => "news",
            AgentRole::Router => "router",
            AgentRole::Writer => "writer",
            AgentRole::Critic => "critic",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AgentRole {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| LlmError::Config(format!("unknown agent role `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
    pub attempt: u32,
}

/// A parsed structured reply plus the parse failures that preceded it.
#[derive(Debug, Clone, PartialEq)]
pub struct Answer<T> {
    pub value: T,
    pub reprompts: u32,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Gateway {
    prompts: PromptLibrary,
    default_backend: Arc<dyn LlmBackend>,
    by_role: BTreeMap<AgentRole, Arc<dyn LlmBackend>>,
    temperatures: BTreeMap<AgentRole, f64>,
}

impl Gateway {
    pub fn new(prompts: PromptLibrary, default_backend: Arc<dyn LlmBackend>) -> Self {
        Self {
            prompts,
            default_backend,
            by_role: BTreeMap::new(),
            temperatures: BTreeMap::new(),
        }
    }

    /// Gateway over a fresh scripted session with the built-in templates.
    pub fn scripted(rules: ScriptedRules) -> Self {
        Self::new(
            PromptLibrary::builtin(),
            Arc::new(ScriptedBackend::new(Arc::new(rules))),
        )
    }

    pub fn with_role_backend(mut self, role: AgentRole, backend: Arc<dyn LlmBackend>) -> Self {
        self.by_role.insert(role, backend);
        self
    }

    pub fn with_temperature(mut self, role: AgentRole, temperature: f64) -> Self {
        self.temperatures.insert(role, temperature);
        self
    }

    pub fn prompts(&self) -> &PromptLibrary {
        &self.prompts
    }

    pub fn backend_for(&self, role: AgentRole) -> &Arc<dyn LlmBackend> {
        self.by_role.get(&role).unwrap_or(&self.default_backend)
    }

    pub fn render(
        &self,
        role: AgentRole,
        template_id: &str,
        ctx: &BTreeMap<String, String>,
        attachments: Vec<Attachment>,
    ) -> Result<PromptEnvelope, LlmError> {
        let mut env = self.prompts.render(template_id, ctx, attachments)?;
        env.temperature = self.temperatures.get(&role).copied().unwrap_or(0.0);
        Ok(env)
    }

    /// Sends `envelope` to the role's backend, retrying transient failures
    /// up to `MAX_ATTEMPTS` attempts in total.
    pub fn complete(&self, role: AgentRole, envelope: &PromptEnvelope) -> Result<Completion, LlmError> {
        let backend = self.backend_for(role);
        let mut last = String::new();
        for attempt in 1..=MAX_ATTEMPTS {
            let started = Instant::now();
            match backend.call(envelope) {
                Ok(text) if !text.is_empty() => {
                    return Ok(Completion {
                        text,
                        backend_id: backend.id().to_string(),
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempt,
                    })
                }
                Ok(_) => last = "empty completion".to_string(),
                Err(BackendError::Transient(reason)) => last = reason,
                Err(BackendError::Fatal(e)) => return Err(e),
            }
            log::warn!("{role} attempt {attempt} on {} failed: {last}", backend.id());
        }
        Err(LlmError::BackendUnavailable {
            backend: backend.id().to_string(),
            attempts: MAX_ATTEMPTS,
            reason: last,
        })
    }

    /// Completes and parses `T`, re-prompting at most `max_reprompts` times
    /// on malformed or schema-violating replies.
    pub fn ask<T: StructuredOutput>(
        &self,
        role: AgentRole,
        envelope: &PromptEnvelope,
        max_reprompts: u32,
    ) -> Result<Answer<T>, LlmError> {
        let mut warnings = Vec::new();
        let mut current = envelope.clone();
        for reprompt in 0..=max_reprompts {
            let completion = self.complete(role, &current)?;
            match parse_as::<T>(&completion.text) {
                Ok(value) => {
                    return Ok(Answer { value, reprompts: reprompt, warnings });
                }
                Err(e @ (LlmError::MalformedOutput(_) | LlmError::SchemaViolation { .. })) => {
                    warnings.push(format!("{role}/{}: {e}", envelope.template_id));
                    if reprompt == max_reprompts {
                        return Err(e);
                    }
                    current = envelope.with_note(&format!(
                        "Your previous reply could not be used ({e}). Reply with a single JSON object matching the `{}` schema.",
                        T::SCHEMA
                    ));
                }
                Err(e) => return Err(e),
            }
        }
        unreachable!("loop returns on its final iteration")
    }
}

#[cfg(test)]
mod tests {
    use super::structured::RouteDecision;
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[derive(Debug, Default)]
    struct AlwaysTimeout(AtomicU32);

    impl LlmBackend for AlwaysTimeout {
        fn id(&self) -> &str {
            "flaky"
        }
        fn call(&self, _: &PromptEnvelope) -> Result<String, BackendError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Err(BackendError::Transient("timeout".into()))
        }
    }

    fn router_env(gw: &Gateway) -> PromptEnvelope {
        let ctx = context([
            ("company_name", "X"),
            ("round", "1"),
            ("value_per_share", "1"),
            ("market_price", "1"),
            ("gap_pct", "0%"),
        ]);
        gw.render(AgentRole::Router, "router", &ctx, vec![]).unwrap()
    }

    #[test]
    fn retries_three_times_then_unavailable() {
        let backend = Arc::new(AlwaysTimeout::default());
        let gw = Gateway::new(PromptLibrary::builtin(), backend.clone());
        let err = gw.complete(AgentRole::Router, &router_env(&gw)).unwrap_err();
        assert_eq!(
            err,
            LlmError::BackendUnavailable { backend: "flaky".into(), attempts: 3, reason: "timeout".into() }
        );
        assert_eq!(backend.0.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn scripted_reply_verbatim() {
        let gw = Gateway::scripted(ScriptedRules::new(vec![ScriptRule::new("router", r#"{"route":"end"}"#)]));
        let c = gw.complete(AgentRole::Router, &router_env(&gw)).unwrap();
        assert_eq!(c.text, r#"{"route":"end"}"#);
        assert_eq!(c.attempt, 1);
        assert_eq!(c.backend_id, "scripted");
    }

    #[test]
    fn reprompt_recovers_then_bounded() {
        let gw = Gateway::scripted(ScriptedRules::new(vec![
            ScriptRule::new("router", "thinking...").on_call(1),
            ScriptRule::new("router", r#"{"route":"news"}"#),
        ]));
        let a: Answer<RouteDecision> = gw.ask(AgentRole::Router, &router_env(&gw), 2).unwrap();
        assert_eq!(a.reprompts, 1);
        assert_eq!(a.warnings.len(), 1);

        let gw = Gateway::scripted(ScriptedRules::new(vec![ScriptRule::new("router", "no json")]));
        let err = gw.ask::<RouteDecision>(AgentRole::Router, &router_env(&gw), 2).unwrap_err();
        assert!(matches!(err, LlmError::MalformedOutput(_)));
    }

    #[test]
    fn role_specific_backend_and_temperature() {
        let gw = Gateway::scripted(ScriptedRules::default())
            .with_role_backend(AgentRole::Writer, Arc::new(AlwaysTimeout::default()))
            .with_temperature(AgentRole::Writer, 0.7);
        assert_eq!(gw.backend_for(AgentRole::Writer).id(), "flaky");
        assert_eq!(gw.backend_for(AgentRole::Router).id(), "scripted");
        let env = router_env(&gw);
        assert_eq!(env.temperature, 0.0);
    }
}
