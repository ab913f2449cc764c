//! The question engine: drives a `SessionContext` from `RelevanceCheck` to
//! `Done`, calling the gateway, retriever and search provider on the way.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use super::search::{LocalIndexSearch, SearchProvider};
use super::session::{SessionContext, Subtopic};
use super::state::{next_state, FsmState, StateEvent, TransitionRecord};
use crate::bindings;
use crate::citation::{
    enforce_closed_world, find_markers, render_marker, AbstainReason, CanonicalId, CitedEvidence, ClaimEvidenceRow,
    ClosedWorldOutcome, FidelityReport,
};
use crate::clock::{self, SharedClock};
use crate::config::{EngineConfig, RunConfig};
use crate::gateway::{
    parse_confidence, parse_decomposition, parse_relevance, parse_self_eval, scaffold, tags, Bindings, CompletionUsage,
    ConfidenceScore, Gateway, GatewayError, ModelRoleBinding, SchemaViolation,
};
use crate::retrieval::{
    chunk_text, cosine, mean_similarity, rank_order, ChunkMetadata, EvidenceItem, RetrievalError, Retriever,
    SESSIONS_INDEX,
};
use crate::store::{title_session, MessageEntry, MessageRole, SessionRecord, SessionStore, StoreError};

/// Evidence passages shown to the self-evaluation prompt per subtopic.
const SELF_EVAL_TOP: usize = 3;
/// Distinct titles listed in the relevance prompt.
const RELEVANCE_TITLES: usize = 5;

pub const REFUSAL_TEXT: &str = "This question is outside the research domain covered by the knowledge base, \
so I can't answer it here. Please ask about integrated photonics or optical communication devices.";
pub const ABSTAIN_TEXT: &str =
    "I could not gather enough evidence to answer this reliably, so I am not giving an answer.";
pub const CITATION_ABSTAIN_TEXT: &str =
    "I could not produce an answer whose citations all check out against the retrieved evidence, so I am not giving one.";

#[derive(Debug, Error)]
pub enum FsmError {
    #[error("question must not be empty")]
    EmptyQuestion,
    #[error("invalid transition {from} -> {to} on {event}")]
    InvalidTransition {
        from: FsmState,
        to: FsmState,
        event: StateEvent,
    },
    #[error("run_question needs a session in RelevanceCheck, found {0}")]
    NotRunnable(FsmState),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("run aborted in {state}: {source}")]
    Aborted {
        state: FsmState,
        #[source]
        source: Box<GatewayError>,
        trace: Vec<TransitionRecord>,
    },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub session_id: Uuid,
    pub question: String,
    pub answer_text: String,
    pub citations: Vec<CitedEvidence>,
    pub final_confidence: ConfidenceScore,
    pub abstained: bool,
    pub disclaimer: Option<String>,
    /// Search rounds performed.
    pub iterations: u32,
    pub subtopics: Vec<Subtopic>,
    pub mean_similarity: f64,
    pub evidence_count: usize,
    pub usage: CompletionUsage,
    pub fidelity: Option<FidelityReport>,
    pub claim_table: Vec<ClaimEvidenceRow>,
    pub abstain_reason: Option<AbstainReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)] // one per question; boxing buys nothing
pub enum RunOutcome {
    Answered(AnswerRecord),
    Irrelevant {
        session_id: Uuid,
        refusal: String,
        usage: CompletionUsage,
    },
}

impl RunOutcome {
    pub fn answer(&self) -> Option<&AnswerRecord> {
        match self {
            RunOutcome::Answered(a) => Some(a),
            RunOutcome::Irrelevant { .. } => None,
        }
    }

    pub fn session_id(&self) -> Uuid {
        match self {
            RunOutcome::Answered(a) => a.session_id,
            RunOutcome::Irrelevant { session_id, .. } => *session_id,
        }
    }

    pub fn usage(&self) -> CompletionUsage {
        match self {
            RunOutcome::Answered(a) => a.usage,
            RunOutcome::Irrelevant { usage, .. } => *usage,
        }
    }
}

/// Moves `ctx` along the edge for `event`, recording the transition.
pub fn advance(
    ctx: &mut SessionContext,
    event: StateEvent,
    now: chrono::DateTime<chrono::Utc>,
) -> Result<FsmState, FsmError> {
    let from = ctx.state;
    let to = next_state(from, event).ok_or(FsmError::InvalidTransition {
        from,
        to: event.target(),
        event,
    })?;
    ctx.trace.push(TransitionRecord {
        from,
        to,
        event,
        timestamp: now,
        iteration_i: ctx.iteration_i,
    });
    ctx.state = to;
    Ok(to)
}

/// `[[cite: ...]] Title (year)` followed by the passage, one block per item.
pub fn render_evidence(items: &[EvidenceItem]) -> String {
    let mut out = String::new();
    for e in items {
        let m = &e.chunk.metadata;
        out.push_str(&render_marker(&e.chunk.doc_id, e.chunk.span_id));
        out.push(' ');
        out.push_str(if m.title.is_empty() { "Untitled" } else { &m.title });
        if let Some(y) = m.year {
            out.push_str(&format!(" ({y})"));
        }
        out.push('\n');
        out.push_str(e.chunk.text.trim());
        out.push_str("\n\n");
    }
    out
}

fn strip_markers(text: &str) -> String {
    let Ok(markers) = find_markers(text) else {
        return text.to_string();
    };
    let mut out = String::new();
    let mut last = 0;
    for m in markers {
        out.push_str(&text[last..m.range.start]);
        last = m.range.end;
    }
    out.push_str(&text[last..]);
    out
}

fn disclaimer_text(ctx: &SessionContext, final_conf: ConfidenceScore) -> String {
    let open: Vec<&str> = ctx.unresolved().map(|s| s.text.as_str()).collect();
    if open.is_empty() {
        format!(
            "Low confidence: the final confidence of {final_conf} is below the answer gate of {}.",
            ctx.config.answer_gate
        )
    } else {
        format!(
            "Low confidence: after {} search round(s) these subtopics are still not well covered: {}. \
             Final confidence {final_conf}.",
            ctx.iteration_i,
            open.join("; ")
        )
    }
}

pub struct Engine {
    gateway: Arc<Gateway>,
    retriever: Retriever,
    online: Option<Arc<dyn SearchProvider>>,
    local: Arc<dyn SearchProvider>,
    sessions: Option<Arc<SessionStore>>,
    clock: SharedClock,
    config: EngineConfig,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("provider", &self.gateway.provider().name())
            .field("online_search", &self.online.as_ref().map(|s| s.name().to_string()))
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(gateway: Arc<Gateway>, retriever: Retriever, config: EngineConfig) -> Self {
        Self {
            gateway,
            local: Arc::new(LocalIndexSearch::new(retriever.clone())),
            retriever,
            online: None,
            sessions: None,
            clock: clock::system(),
            config,
        }
    }

    /// Provider used for refinement when online search is allowed.
    pub fn with_search(mut self, provider: Arc<dyn SearchProvider>) -> Self {
        self.online = Some(provider);
        self
    }

    pub fn with_sessions(mut self, store: Arc<SessionStore>) -> Self {
        self.sessions = Some(store);
        self
    }

    pub fn with_clock(mut self, clock: SharedClock) -> Self {
        self.clock = clock;
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn retriever(&self) -> &Retriever {
        &self.retriever
    }

    pub fn sessions(&self) -> Option<&Arc<SessionStore>> {
        self.sessions.as_ref()
    }

    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }

    /// Opens a new session with the engine's own configuration.
    pub fn start_session(&self, question: &str, ingest_flag: bool) -> Result<SessionContext, FsmError> {
        self.open(question, ingest_flag, self.config.clone(), None)
    }

    /// Opens a new session with one run's factors applied.
    pub fn start_session_with(
        &self,
        question: &str,
        ingest_flag: bool,
        run: &RunConfig,
    ) -> Result<SessionContext, FsmError> {
        self.open(question, ingest_flag, self.config.for_run(run), None)
    }

    /// Opens a follow-up question in an existing stored session.
    pub fn resume_session(
        &self,
        session_id: Uuid,
        question: &str,
        ingest_flag: bool,
    ) -> Result<SessionContext, FsmError> {
        let store = self
            .sessions
            .as_ref()
            .ok_or_else(|| FsmError::Precondition("no session store configured".into()))?;
        let record = store.load_session(session_id)?;
        self.open(question, ingest_flag, self.config.clone(), Some(record))
    }

    fn open(
        &self,
        question: &str,
        ingest_flag: bool,
        config: EngineConfig,
        existing: Option<SessionRecord>,
    ) -> Result<SessionContext, FsmError> {
        if question.trim().is_empty() {
            return Err(FsmError::EmptyQuestion);
        }
        config.validate().map_err(|e| FsmError::Precondition(e.to_string()))?;
        let now = self.clock.now();
        let mut ctx = SessionContext::new(question, ingest_flag, config, now);
        match existing {
            Some(rec) => {
                ctx.session_id = rec.session_id;
                ctx.created_at = rec.created_at;
                ctx.title = Some(rec.title);
                ctx.messages = rec.messages;
            }
            None => {
                if let Some(store) = &self.sessions {
                    let title = title_session(
                        &ctx.question,
                        &self.gateway,
                        &ctx.config.models.fast_title,
                        ctx.config.schema_budget,
                        now.date_naive(),
                    );
                    ctx.title = Some(title);
                    store.persist_session(&self.record(&ctx))?;
                }
            }
        }
        advance(&mut ctx, StateEvent::Start, now)?;
        Ok(ctx)
    }

    fn record(&self, ctx: &SessionContext) -> SessionRecord {
        SessionRecord {
            session_id: ctx.session_id,
            title: ctx
                .title
                .clone()
                .unwrap_or_else(|| crate::store::fallback_title(ctx.created_at.date_naive())),
            created_at: ctx.created_at,
            messages: ctx.messages.clone(),
        }
    }

    fn persist(&self, ctx: &SessionContext) -> Result<(), FsmError> {
        if let Some(store) = &self.sessions {
            store.persist_session(&self.record(ctx))?;
        }
        Ok(())
    }

    fn step(&self, ctx: &mut SessionContext, event: StateEvent) -> Result<FsmState, FsmError> {
        advance(ctx, event, self.clock.now())
    }

    /// One schema-checked model call; usage is charged to the session and a
    /// final failure aborts the run.
    fn llm<T>(
        &self,
        ctx: &mut SessionContext,
        tag: &str,
        binding: &ModelRoleBinding,
        vars: Bindings,
        parser: impl Fn(&str) -> Result<T, SchemaViolation>,
    ) -> Result<T, FsmError> {
        match self.gateway.ask(tag, binding, vars, parser, ctx.config.schema_budget) {
            Ok(done) => {
                ctx.usage += done.usage;
                Ok(done.value)
            }
            Err(source) => {
                if let GatewayError::SchemaExhausted { usage, .. } = &source {
                    ctx.usage += *usage;
                }
                Err(FsmError::Aborted {
                    state: ctx.state,
                    source: Box::new(source),
                    trace: ctx.trace.clone(),
                })
            }
        }
    }

    /// Opens a session and runs it to completion.
    pub fn ask(&self, question: &str, ingest_flag: bool) -> Result<RunOutcome, FsmError> {
        let mut ctx = self.start_session(question, ingest_flag)?;
        self.run_question(&mut ctx)
    }

    pub fn ask_with(&self, question: &str, ingest_flag: bool, run: &RunConfig) -> Result<RunOutcome, FsmError> {
        let mut ctx = self.start_session_with(question, ingest_flag, run)?;
        self.run_question(&mut ctx)
    }

    /// Drives the session to `Done`.
    pub fn run_question(&self, ctx: &mut SessionContext) -> Result<RunOutcome, FsmError> {
        if ctx.state != FsmState::RelevanceCheck {
            return Err(FsmError::NotRunnable(ctx.state));
        }
        let question = ctx.question.clone();
        ctx.messages
            .push(MessageEntry::new(MessageRole::User, question, self.clock.now()));
        loop {
            match ctx.state {
                FsmState::RelevanceCheck => {
                    if !self.relevance_check(ctx)? {
                        self.step(ctx, StateEvent::Irrelevant)?;
                        let entry = MessageEntry::new(MessageRole::Assistant, REFUSAL_TEXT, self.clock.now())
                            .with_usage(ctx.usage);
                        ctx.messages.push(entry);
                        self.persist(ctx)?;
                        return Ok(RunOutcome::Irrelevant {
                            session_id: ctx.session_id,
                            refusal: REFUSAL_TEXT.to_string(),
                            usage: ctx.usage,
                        });
                    }
                    self.step(ctx, StateEvent::Relevant)?;
                }
                FsmState::ConfidenceCheck => {
                    let confident = self.confidence_check(ctx)?;
                    let event = if confident {
                        StateEvent::Confident
                    } else {
                        StateEvent::NotConfident
                    };
                    self.step(ctx, event)?;
                }
                FsmState::Decomposition => {
                    let vars = bindings! { "question" => ctx.question.clone() };
                    let binding = ctx.config.models.knowledge.clone();
                    let topics = self.llm(ctx, tags::DECOMPOSITION, &binding, vars, parse_decomposition)?;
                    ctx.subtopics = topics.into_iter().map(Subtopic::unrated).collect();
                    ctx.decomposed = true;
                    self.step(ctx, StateEvent::Decomposed)?;
                }
                FsmState::SelfEvaluation => {
                    let scored = self.self_evaluate_subtopics(ctx)?;
                    ctx.subtopics = scored;
                    let event = if ctx.subtopics.iter().all(|s| !s.needs_search()) {
                        StateEvent::AllConfident
                    } else if ctx.iteration_i >= ctx.config.retry_budget {
                        ctx.budget_exhausted = true;
                        StateEvent::BudgetExhausted
                    } else {
                        StateEvent::NeedsSearch
                    };
                    self.step(ctx, event)?;
                }
                FsmState::SearchOnline => {
                    self.refine_round(ctx)?;
                }
                FsmState::Answer => {
                    if let Some(record) = self.compose_answer(ctx)? {
                        return Ok(RunOutcome::Answered(record));
                    }
                }
                FsmState::Idle | FsmState::Done => return Err(FsmError::NotRunnable(ctx.state)),
            }
        }
    }

    fn relevance_check(&self, ctx: &mut SessionContext) -> Result<bool, FsmError> {
        let retrieved = self
            .retriever
            .dynamic_k_retrieve_at(&ctx.question, &ctx.config.retrieval, ctx.iteration_i)?;
        ctx.mean_similarity = retrieved.mean_similarity;
        ctx.merge_evidence(retrieved.evidence.iter().cloned());

        let mut seen = BTreeSet::new();
        let summaries: Vec<String> = retrieved
            .evidence
            .iter()
            .filter(|e| seen.insert(e.chunk.doc_id.clone()))
            .take(RELEVANCE_TITLES)
            .map(|e| match e.chunk.metadata.year {
                Some(y) => format!("- {} ({y})", e.chunk.metadata.title),
                None => format!("- {}", e.chunk.metadata.title),
            })
            .collect();
        let summaries = if summaries.is_empty() {
            "(nothing indexed matches)".to_string()
        } else {
            summaries.join("\n")
        };
        let vars = bindings! {
            "summaries_text" => summaries,
            "sim_score" => ctx.mean_similarity,
            "question" => ctx.question.clone(),
        };
        let binding = ctx.config.models.relevance.clone();
        self.llm(ctx, tags::RELEVANCE, &binding, vars, parse_relevance)
    }

    fn top_context(&self, ctx: &SessionContext) -> Vec<EvidenceItem> {
        let mut pool = ctx.evidence.clone();
        pool.sort_by(rank_order);
        pool.truncate(ctx.config.retrieval.top_l);
        pool
    }

    fn confidence_check(&self, ctx: &mut SessionContext) -> Result<bool, FsmError> {
        let vars = bindings! {
            "sim_score" => ctx.mean_similarity,
            "base_context" => render_evidence(&self.top_context(ctx)),
            "question" => ctx.question.clone(),
        };
        let binding = ctx.config.models.confidence.clone();
        let verdict = self.llm(ctx, tags::CONFIDENCE, &binding, vars, parse_confidence)?;
        ctx.initial_confidence = Some(verdict.confidence_score);
        tracing::debug!(score = %verdict.confidence_score, reasoning = %verdict.reasoning, "initial confidence");

        if ctx.config.fast_draft {
            let vars = bindings! { "question" => ctx.question.clone() };
            let parser = |r: &str| Ok::<_, SchemaViolation>(r.trim().to_string());
            match self
                .gateway
                .ask(tags::FAST_DRAFT, &ctx.config.models.fast_title, vars, parser, 1)
            {
                Ok(done) => {
                    ctx.usage += done.usage;
                    tracing::debug!(draft = %done.value, "fast draft");
                    ctx.fast_draft = Some(done.value);
                }
                Err(e) => tracing::debug!(error = %e, "fast draft skipped"),
            }
        }
        Ok(verdict.confident)
    }

    /// Scores every subtopic against the evidence pool. Does not change state.
    pub fn self_evaluate_subtopics(&self, ctx: &mut SessionContext) -> Result<Vec<Subtopic>, FsmError> {
        if ctx.subtopics.is_empty() {
            return Err(FsmError::Precondition("no subtopics to evaluate".into()));
        }
        let mut pool_vecs = Vec::with_capacity(ctx.evidence.len());
        for e in &ctx.evidence {
            let key = e.key();
            let v = match ctx.embedding_cache.get(&key) {
                Some(v) => Some(v.clone()),
                None => self.retriever.embed(&e.chunk.text).ok().inspect(|v| {
                    ctx.embedding_cache.insert(key, v.clone());
                }),
            };
            pool_vecs.push(v);
        }
        let topics: Vec<String> = ctx.subtopics.iter().map(|s| s.text.clone()).collect();
        let binding = ctx.config.models.confidence.clone();
        let mut scored = Vec::with_capacity(topics.len());
        for topic in topics {
            let mut ranked: Vec<EvidenceItem> = match self.retriever.embed(&topic) {
                Ok(tv) => ctx
                    .evidence
                    .iter()
                    .zip(&pool_vecs)
                    .filter_map(|(e, v)| {
                        v.as_ref().map(|v| EvidenceItem {
                            similarity: cosine(&tv, v),
                            ..e.clone()
                        })
                    })
                    .collect(),
                Err(_) => Vec::new(),
            };
            ranked.sort_by(rank_order);
            ranked.truncate(SELF_EVAL_TOP);
            let vars = bindings! {
                "topic" => topic.clone(),
                "mean_sim" => mean_similarity(&ranked),
                "base_context" => render_evidence(&ranked),
            };
            let score = self.llm(ctx, tags::SELF_EVALUATION, &binding, vars, parse_self_eval)?;
            scored.push(Subtopic::scored(topic, score));
        }
        Ok(scored)
    }

    fn search_provider(&self, ctx: &SessionContext) -> &Arc<dyn SearchProvider> {
        match (&self.online, ctx.config.allow_online_search) {
            (Some(p), true) => p,
            _ => &self.local,
        }
    }

    /// Issues one sub-question per unresolved subtopic, pools the results and
    /// returns to `SelfEvaluation`. Returns the number of new evidence items.
    pub fn refine_round(&self, ctx: &mut SessionContext) -> Result<usize, FsmError> {
        if ctx.state != FsmState::SearchOnline {
            return Err(FsmError::Precondition(format!("refine_round called in {}", ctx.state)));
        }
        if ctx.iteration_i >= ctx.config.retry_budget {
            return Err(FsmError::Precondition("retry budget already spent".into()));
        }
        let open: Vec<String> = ctx.unresolved().map(|s| s.text.clone()).collect();
        if open.is_empty() {
            return Err(FsmError::Precondition("no Low or Medium subtopic to refine".into()));
        }
        let provider = self.search_provider(ctx).clone();
        let round = ctx.iteration_i + 1;
        let mut added = 0;
        for topic in open {
            let subq = format!("{topic}: {}", ctx.question);
            match provider.search(&subq, ctx.config.search_k) {
                Ok(chunks) => {
                    let Ok(qv) = self.retriever.embed(&subq) else { continue };
                    let items: Vec<EvidenceItem> = chunks
                        .into_iter()
                        .filter_map(|c| {
                            let v = self.retriever.embed(&c.text).ok()?;
                            Some(EvidenceItem {
                                similarity: cosine(&qv, &v),
                                chunk: c,
                                retrieved_at_iteration: round,
                            })
                        })
                        .collect();
                    added += ctx.merge_evidence(items);
                }
                Err(e) => {
                    tracing::warn!(provider = provider.name(), error = %e, "search failed; continuing without new evidence")
                }
            }
        }
        ctx.iteration_i = round;
        self.step(ctx, StateEvent::SearchComplete)?;
        Ok(added)
    }

    /// Returns `None` when the citation check sent the run back for one retry.
    fn compose_answer(&self, ctx: &mut SessionContext) -> Result<Option<AnswerRecord>, FsmError> {
        let final_conf = ctx.final_confidence();
        let below_gate = final_conf.value() < ctx.config.answer_gate;
        let mut disclaimer = (ctx.budget_exhausted || below_gate).then(|| disclaimer_text(ctx, final_conf));

        let mut record = AnswerRecord {
            session_id: ctx.session_id,
            question: ctx.question.clone(),
            answer_text: ABSTAIN_TEXT.to_string(),
            citations: Vec::new(),
            final_confidence: final_conf,
            abstained: below_gate,
            disclaimer: None,
            iterations: ctx.iteration_i,
            subtopics: ctx.subtopics.clone(),
            mean_similarity: ctx.mean_similarity,
            evidence_count: ctx.evidence.len(),
            usage: CompletionUsage::default(),
            fidelity: None,
            claim_table: Vec::new(),
            abstain_reason: None,
        };

        if !below_gate {
            let vars = bindings! {
                "confidence" => final_conf.value(),
                "mean_sim" => ctx.mean_similarity,
                "scaffold" => scaffold(ctx.config.reasoning_level),
                "question" => ctx.question.clone(),
                "base_context" => render_evidence(&self.top_context(ctx)),
            };
            let binding = ctx.config.models.knowledge.clone();
            let parser = |r: &str| {
                let t = r.trim();
                if t.is_empty() {
                    Err(SchemaViolation("empty answer".into()))
                } else {
                    Ok(t.to_string())
                }
            };
            let draft = self.llm(ctx, tags::ANSWER, &binding, vars, parser)?;
            match enforce_closed_world(&draft, &ctx.evidence, &ctx.config.citation_policy) {
                ClosedWorldOutcome::Final(done) => {
                    record.answer_text = done.text;
                    record.citations = done.citations;
                    record.fidelity = Some(done.report);
                    record.claim_table = done.table;
                }
                ClosedWorldOutcome::Abstain(reason) => {
                    if !ctx.citation_retry_used {
                        tracing::info!(?reason, "draft failed the citation check; retrying once from relevance");
                        ctx.citation_retry_used = true;
                        ctx.subtopics.clear();
                        ctx.decomposed = false;
                        ctx.budget_exhausted = false;
                        ctx.initial_confidence = None;
                        self.step(ctx, StateEvent::CitationRetry)?;
                        return Ok(None);
                    }
                    record.answer_text = CITATION_ABSTAIN_TEXT.to_string();
                    record.final_confidence = ConfidenceScore::ZERO;
                    record.abstained = true;
                    if let AbstainReason::FidelityCheckFailed { report } = &reason {
                        record.fidelity = Some(*report);
                    }
                    record.abstain_reason = Some(reason);
                    disclaimer = Some(disclaimer_text(ctx, ConfidenceScore::ZERO));
                }
            }
        }
        record.disclaimer = disclaimer;
        record.usage = ctx.usage;
        self.step(ctx, StateEvent::Answered)?;

        let mut content = record.answer_text.clone();
        if let Some(d) = &record.disclaimer {
            content = format!("{content}\n\n{d}");
        }
        ctx.messages
            .push(MessageEntry::new(MessageRole::Assistant, content, self.clock.now()).with_usage(ctx.usage));
        if ctx.ingest_flag && !record.abstained {
            self.ingest_exchange(ctx, &record);
        }
        self.persist(ctx)?;
        Ok(Some(record))
    }

    /// Writes the question and answer into the session index so later
    /// questions can retrieve them.
    fn ingest_exchange(&self, ctx: &SessionContext, record: &AnswerRecord) {
        let doc_id = match CanonicalId::url(&format!("https://sessions.local/{}", ctx.session_id)) {
            Ok(id) => id,
            Err(e) => {
                tracing::warn!(error = %e, "cannot derive a session document id");
                return;
            }
        };
        let text = format!("Q: {}\n\nA: {}", ctx.question, strip_markers(&record.answer_text));
        let first_span = self
            .retriever
            .read()
            .index(SESSIONS_INDEX)
            .map(|idx| idx.iter().filter(|c| c.chunk.doc_id == doc_id).count() as u32)
            .unwrap_or(0);
        let meta = ChunkMetadata {
            title: ctx.title.clone().unwrap_or_else(|| ctx.question.clone()),
            year: None,
            ..Default::default()
        };
        let chunks = chunk_text(&doc_id, &text, &meta, first_span);
        if let Err(e) = self.retriever.index_add(SESSIONS_INDEX, chunks) {
            tracing::warn!(error = %e, "session exchange was not indexed");
        }
    }
}
