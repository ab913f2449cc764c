//! Per-question mutable context.

use std::collections::{BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::state::{FsmState, TransitionRecord};
use crate::config::EngineConfig;
use crate::gateway::{CompletionUsage, ConfidenceLabel, ConfidenceScore};
use crate::retrieval::{ChunkKey, EmbeddingVector, EvidenceItem};
use crate::store::MessageEntry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subtopic {
    pub text: String,
    pub score: ConfidenceScore,
    pub label: ConfidenceLabel,
}

impl Subtopic {
    /// A freshly decomposed subtopic starts unrated (score 0, Low).
    pub fn unrated(text: impl Into<String>) -> Self {
        Self::scored(text, ConfidenceScore::ZERO)
    }

    pub fn scored(text: impl Into<String>, score: ConfidenceScore) -> Self {
        Self {
            text: text.into(),
            score,
            label: score.label(),
        }
    }

    pub fn needs_search(&self) -> bool {
        self.label != ConfidenceLabel::High
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionContext {
    pub session_id: Uuid,
    pub question: String,
    pub state: FsmState,
    pub iteration_i: u32,
    pub subtopics: Vec<Subtopic>,
    pub evidence: Vec<EvidenceItem>,
    pub mean_similarity: f64,
    pub ingest_flag: bool,
    pub messages: Vec<MessageEntry>,
    pub trace: Vec<TransitionRecord>,
    pub created_at: DateTime<Utc>,
    pub title: Option<String>,
    /// Effective configuration of this run.
    pub config: EngineConfig,
    pub usage: CompletionUsage,
    pub initial_confidence: Option<ConfidenceScore>,
    pub decomposed: bool,
    pub budget_exhausted: bool,
    pub citation_retry_used: bool,
    /// Provisional draft from the confidence check; logged, never shown.
    pub fast_draft: Option<String>,
    /// Embeddings of pooled passages, so repeated self-evaluations do not
    /// re-embed the whole pool.
    #[serde(skip)]
    pub embedding_cache: HashMap<ChunkKey, EmbeddingVector>,
}

impl SessionContext {
    pub fn new(question: &str, ingest_flag: bool, config: EngineConfig, now: DateTime<Utc>) -> Self {
        Self {
            session_id: Uuid::new_v4(),
            question: question.trim().to_string(),
            state: FsmState::Idle,
            iteration_i: 0,
            subtopics: Vec::new(),
            evidence: Vec::new(),
            mean_similarity: 0.0,
            ingest_flag,
            messages: Vec::new(),
            trace: Vec::new(),
            created_at: now,
            title: None,
            config,
            usage: CompletionUsage::default(),
            initial_confidence: None,
            decomposed: false,
            budget_exhausted: false,
            citation_retry_used: false,
            fast_draft: None,
            embedding_cache: HashMap::new(),
        }
    }

    /// Adds evidence not already pooled; returns how many were new.
    pub fn merge_evidence(&mut self, items: impl IntoIterator<Item = EvidenceItem>) -> usize {
        merge_evidence(&mut self.evidence, items)
    }

    /// Confidence used for gating: the weakest subtopic after a
    /// decomposition, else the initial check.
    pub fn final_confidence(&self) -> ConfidenceScore {
        if self.decomposed && !self.subtopics.is_empty() {
            self.subtopics.iter().map(|s| s.score).min().expect("non-empty")
        } else {
            self.initial_confidence.unwrap_or(ConfidenceScore::ZERO)
        }
    }

    pub fn unresolved(&self) -> impl Iterator<Item = &Subtopic> {
        self.subtopics.iter().filter(|s| s.needs_search())
    }
}

/// Appends items whose `(doc_id, span_id)` is not yet in `pool`.
pub fn merge_evidence(pool: &mut Vec<EvidenceItem>, items: impl IntoIterator<Item = EvidenceItem>) -> usize {
    let mut seen: BTreeSet<ChunkKey> = pool.iter().map(|e| e.key()).collect();
    let before = pool.len();
    for item in items {
        if seen.insert(item.key()) {
            pool.push(item);
        }
    }
    pool.len() - before
}
