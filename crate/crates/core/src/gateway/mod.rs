//! Model-provider abstraction.
//!
//! The gateway renders state-specific prompts, sends them to a [`Provider`],
//! validates the reply with a strict parser and re-issues the call when the
//! reply does not parse, up to a per-call budget. Usage is priced from a
//! [`RateTable`] and summed across attempts.
//!
//! Three providers ship: [`ScriptedProvider`] (queued replies per state tag,
//! for tests), [`SimulatedProvider`] (a deterministic heuristic backend for
//! offline demos) and [`OpenAiCompatible`] (any chat-completions endpoint).

mod openai;
mod parse;
mod prompts;
mod scripted;
mod simulated;
mod template;
mod usage;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use openai::{OpenAiCompatible, API_BASE_ENV, API_KEY_ENV};
pub(crate) use parse::{clean_title, strip_fence};
pub use parse::{
    parse_confidence, parse_decomposition, parse_judge, parse_relevance, parse_self_eval, parse_title,
    render_decomposition, render_relevance, render_self_eval, ConfidenceLabel, ConfidenceScore, ConfidenceVerdict,
    SchemaViolation, CONFIDENT_AT, MAX_REASONING_WORDS, MAX_SUBTOPICS, MAX_TITLE_WORDS, MIN_SUBTOPICS, MIN_TITLE_WORDS,
};
pub(crate) use prompts::scaffold;
pub use prompts::{builtin_templates, tags};
pub use scripted::{CallRecord, ScriptedProvider};
pub use simulated::SimulatedProvider;
pub use template::{render, BindingValue, Bindings, PromptTemplate, RenderedPrompt};
pub use usage::{estimate_tokens, CompletionUsage, ModelRate, RateTable};

/// Default number of attempts per state call.
pub const DEFAULT_SCHEMA_BUDGET: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("render error: {0}")]
    Render(String),
    #[error("gateway config: {0}")]
    Config(String),
    #[error("provider error: {message}")]
    Provider { message: String, retryable: bool },
    #[error("{state_tag}: no valid reply after {attempts} attempt(s): {reason}")]
    SchemaExhausted {
        state_tag: String,
        attempts: u32,
        reason: String,
        last_reply: String,
        usage: CompletionUsage,
    },
    #[error("retry budget must be at least 1")]
    InvalidBudget,
}

impl GatewayError {
    pub fn provider(message: impl Into<String>, retryable: bool) -> Self {
        GatewayError::Provider {
            message: message.into(),
            retryable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Relevance,
    Confidence,
    Knowledge,
    FastTitle,
    Judge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningLevel {
    Low,
    #[default]
    Medium,
    High,
}

impl ReasoningLevel {
    pub const ALL: [ReasoningLevel; 3] = [ReasoningLevel::Low, ReasoningLevel::Medium, ReasoningLevel::High];

    pub fn as_str(self) -> &'static str {
        match self {
            ReasoningLevel::Low => "low",
            ReasoningLevel::Medium => "medium",
            ReasoningLevel::High => "high",
        }
    }
}

impl fmt::Display for ReasoningLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReasoningLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(ReasoningLevel::Low),
            "medium" => Ok(ReasoningLevel::Medium),
            "high" => Ok(ReasoningLevel::High),
            other => Err(format!(
                "unknown reasoning level {other:?} (expected low, medium or high)"
            )),
        }
    }
}

/// Which model serves a role, and how it is decoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRoleBinding {
    pub role: Role,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_effort: Option<ReasoningLevel>,
    /// `None` leaves the provider's preset in place.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

impl ModelRoleBinding {
    pub fn new(role: Role, model_id: &str) -> Self {
        Self {
            role,
            model_id: model_id.into(),
            reasoning_effort: None,
            temperature: None,
        }
    }

    pub fn with_effort(mut self, effort: ReasoningLevel) -> Self {
        self.reasoning_effort = Some(effort);
        self
    }

    pub fn with_temperature(mut self, t: Option<f64>) -> Self {
        self.temperature = t;
        self
    }
}

/// One request to a provider.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub state_tag: String,
    pub binding: ModelRoleBinding,
    pub system: String,
    pub prompt: String,
    /// The bindings the prompt was rendered from. Real providers ignore
    /// them; the offline backends read them instead of re-parsing prose.
    pub vars: Bindings,
}

impl CompletionRequest {
    pub fn var(&self, name: &str) -> Option<&BindingValue> {
        self.vars.get(name)
    }

    pub fn var_f64(&self, name: &str) -> Option<f64> {
        self.vars.get(name).and_then(BindingValue::as_f64)
    }

    pub fn var_text(&self, name: &str) -> String {
        self.vars.get(name).map(BindingValue::as_text).unwrap_or_default()
    }
}

/// Raw reply with the usage the backend declared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderReply {
    pub text: String,
    pub token_in: u64,
    pub token_out: u64,
}

impl ProviderReply {
    /// Reply with usage estimated from text length.
    pub fn estimated(req: &CompletionRequest, text: String) -> Self {
        Self {
            token_in: estimate_tokens(&req.system) + estimate_tokens(&req.prompt),
            token_out: estimate_tokens(&text),
            text,
        }
    }
}

pub trait Provider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, req: &CompletionRequest) -> Result<ProviderReply, GatewayError>;
}

/// A parsed reply with the usage of every attempt it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Completed<T> {
    pub value: T,
    pub usage: CompletionUsage,
    pub attempts: u32,
    pub raw: String,
}

#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn Provider>,
    rates: RateTable,
    templates: BTreeMap<String, PromptTemplate>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("provider", &self.provider.name())
            .field("models", &self.rates.models.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>, rates: RateTable) -> Self {
        Self {
            provider,
            rates,
            templates: builtin_templates(),
        }
    }

    /// Replaces or adds a template, keyed by its state tag.
    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.templates.insert(template.state_tag.clone(), template);
        self
    }

    pub fn provider(&self) -> &Arc<dyn Provider> {
        &self.provider
    }

    pub fn rates(&self) -> &RateTable {
        &self.rates
    }

    pub fn template(&self, state_tag: &str) -> Option<&PromptTemplate> {
        self.templates.get(state_tag)
    }

    /// Renders the template for `state_tag` into a request.
    pub fn request(
        &self,
        state_tag: &str,
        binding: &ModelRoleBinding,
        vars: Bindings,
    ) -> Result<CompletionRequest, GatewayError> {
        let template = self
            .template(state_tag)
            .ok_or_else(|| GatewayError::Render(format!("no template for state {state_tag:?}")))?;
        let rendered = template.render(&vars)?;
        let mut binding = binding.clone();
        if binding.reasoning_effort.is_some() && !self.rates.supports_reasoning_effort(&binding.model_id) {
            tracing::debug!(model = %binding.model_id, "model takes no reasoning effort; using its default decoding");
            binding.reasoning_effort = None;
        }
        Ok(CompletionRequest {
            state_tag: state_tag.to_string(),
            binding,
            system: rendered.system,
            prompt: rendered.user,
            vars,
        })
    }

    /// One provider call, priced.
    pub fn call(&self, req: &CompletionRequest) -> Result<(String, CompletionUsage), GatewayError> {
        let reply = self.provider.complete(req)?;
        let usage = self.rates.usage(&req.binding.model_id, reply.token_in, reply.token_out);
        Ok((reply.text, usage))
    }

    /// Calls the provider until `parser` accepts a reply, at most `budget`
    /// times. Retryable provider errors also consume an attempt.
    pub fn complete_with_retry<T>(
        &self,
        req: &CompletionRequest,
        parser: impl Fn(&str) -> Result<T, SchemaViolation>,
        budget: u32,
    ) -> Result<Completed<T>, GatewayError> {
        if budget == 0 {
            return Err(GatewayError::InvalidBudget);
        }
        let mut usage = CompletionUsage::default();
        let mut last_reply = String::new();
        let mut reason = String::new();
        for attempt in 1..=budget {
            match self.call(req) {
                Ok((text, u)) => {
                    usage += u;
                    match parser(&text) {
                        Ok(value) => {
                            return Ok(Completed {
                                value,
                                usage,
                                attempts: attempt,
                                raw: text,
                            })
                        }
                        Err(v) => {
                            tracing::warn!(state = %req.state_tag, attempt, reason = %v, "reply violates schema; retrying");
                            reason = v.0;
                            last_reply = text;
                        }
                    }
                }
                Err(GatewayError::Provider {
                    message,
                    retryable: true,
                }) => {
                    tracing::warn!(state = %req.state_tag, attempt, %message, "provider call failed; retrying");
                    reason = message;
                }
                Err(e) => return Err(e),
            }
        }
        Err(GatewayError::SchemaExhausted {
            state_tag: req.state_tag.clone(),
            attempts: budget,
            reason,
            last_reply,
            usage,
        })
    }

    /// Renders, calls and parses in one step.
    pub fn ask<T>(
        &self,
        state_tag: &str,
        binding: &ModelRoleBinding,
        vars: Bindings,
        parser: impl Fn(&str) -> Result<T, SchemaViolation>,
        budget: u32,
    ) -> Result<Completed<T>, GatewayError> {
        let req = self.request(state_tag, binding, vars)?;
        self.complete_with_retry(&req, parser, budget)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gateway(p: ScriptedProvider) -> (Gateway, Arc<ScriptedProvider>) {
        let p = Arc::new(p);
        (Gateway::new(p.clone(), RateTable::builtin()), p)
    }

    fn req(g: &Gateway) -> CompletionRequest {
        let b = ModelRoleBinding::new(Role::Relevance, "gpt-4o-mini");
        g.request(
            tags::RELEVANCE,
            &b,
            crate::bindings! { "question" => "q", "summaries_text" => "s", "sim_score" => 0.5 },
        )
        .unwrap()
    }

    #[test]
    fn retries_until_valid_and_sums_usage() {
        let (g, p) = gateway(ScriptedProvider::new().push_many(tags::RELEVANCE, ["Yes", "Relevant: Yes"]));
        let r = req(&g);
        let done = g.complete_with_retry(&r, parse_relevance, 3).unwrap();
        assert!(done.value);
        assert_eq!(done.attempts, 2);
        let log = p.calls();
        assert_eq!(log.len(), 2);
        let per_call: CompletionUsage = log
            .iter()
            .map(|c| g.rates().usage("gpt-4o-mini", c.token_in, c.token_out))
            .sum();
        assert_eq!(done.usage, per_call);
    }

    #[test]
    fn budget_one_exhausts() {
        let (g, p) = gateway(ScriptedProvider::new().push(tags::RELEVANCE, "maybe"));
        match g.complete_with_retry(&req(&g), parse_relevance, 1) {
            Err(GatewayError::SchemaExhausted {
                attempts, last_reply, ..
            }) => {
                assert_eq!(attempts, 1);
                assert_eq!(last_reply, "maybe");
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(p.calls().len(), 1);
        assert!(matches!(
            g.complete_with_retry(&req(&g), parse_relevance, 0),
            Err(GatewayError::InvalidBudget)
        ));
    }

    #[test]
    fn good_first_reply_is_one_call() {
        let (g, p) = gateway(ScriptedProvider::new().push(tags::RELEVANCE, "Relevant: No"));
        let done = g.complete_with_retry(&req(&g), parse_relevance, 3).unwrap();
        assert!(!done.value);
        assert_eq!(p.calls().len(), 1);
    }

    #[test]
    fn effort_dropped_for_models_without_it() {
        let (g, _) = gateway(ScriptedProvider::new());
        let b = ModelRoleBinding::new(Role::Relevance, "gpt-4o-mini").with_effort(ReasoningLevel::High);
        let r = g
            .request(
                tags::RELEVANCE,
                &b,
                crate::bindings! { "question" => "q", "summaries_text" => "", "sim_score" => 0.1 },
            )
            .unwrap();
        assert_eq!(r.binding.reasoning_effort, None);
        let b = ModelRoleBinding::new(Role::Confidence, "o4-mini").with_effort(ReasoningLevel::High);
        let r = g
            .request(
                tags::CONFIDENCE,
                &b,
                crate::bindings! { "question" => "q", "base_context" => "", "sim_score" => 0.1 },
            )
            .unwrap();
        assert_eq!(r.binding.reasoning_effort, Some(ReasoningLevel::High));
    }

    #[test]
    fn relevance_prompt_embeds_two_decimal_score() {
        let (g, _) = gateway(ScriptedProvider::new());
        let b = ModelRoleBinding::new(Role::Relevance, "gpt-4o-mini");
        let r = g
            .request(
                tags::RELEVANCE,
                &b,
                crate::bindings! { "question" => "q", "summaries_text" => "", "sim_score" => 0.8215 },
            )
            .unwrap();
        assert!(r.prompt.contains("0.82"));
        assert!(!r.prompt.contains("0.8215"));
    }

    #[test]
    fn non_retryable_provider_error_aborts() {
        let (g, p) = gateway(ScriptedProvider::new());
        assert!(matches!(
            g.complete_with_retry(&req(&g), parse_relevance, 3),
            Err(GatewayError::Provider { retryable: false, .. })
        ));
        assert_eq!(p.calls().len(), 1);
    }
}
