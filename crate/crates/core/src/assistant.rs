//! One facade over the engine, the ingestion pipeline and the stores, shared
//! by the HTTP service and the command line so both behave identically.

use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::citation::{CanonicalId, CitedEvidence, ClaimEvidenceRow, FidelityReport};
use crate::config::{RunConfig, ServiceConfig};
use crate::fsm::{export_trace, Engine, FsmError, RunOutcome};
use crate::gateway::CompletionUsage;
use crate::ingest::{
    DocStatus, IngestError, IngestReport, IngestState, KeywordAxes, MissingEntry, Pipeline, Stores, SyntheticCorpus,
};
use crate::retrieval::{persist, HashEmbedder, Retriever};
use crate::store::{MetricsTable, SessionRecord, SessionStore, SessionSummary, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum AssistantError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("internal error (trace {trace_id}): {message}")]
    Internal { message: String, trace_id: Uuid },
}

impl AssistantError {
    fn internal(e: impl std::fmt::Display) -> Self {
        let trace_id = Uuid::new_v4();
        tracing::error!(%trace_id, error = %e, "request failed");
        AssistantError::Internal {
            message: e.to_string(),
            trace_id,
        }
    }
}

impl From<FsmError> for AssistantError {
    fn from(e: FsmError) -> Self {
        match e {
            FsmError::EmptyQuestion | FsmError::Precondition(_) => AssistantError::BadRequest(e.to_string()),
            FsmError::Store(StoreError::NotFound(what)) => AssistantError::NotFound(what),
            FsmError::Aborted { state, source, trace } => {
                let trace_id = Uuid::new_v4();
                tracing::error!(%trace_id, %state, error = %source, trace = %export_trace(&trace), "run aborted");
                AssistantError::Internal {
                    message: format!("run aborted in {state}: {source}"),
                    trace_id,
                }
            }
            other => AssistantError::internal(other),
        }
    }
}

impl From<IngestError> for AssistantError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::NotFound(what) => AssistantError::NotFound(what),
            IngestError::EmptyInput(_) | IngestError::Config(_) => AssistantError::BadRequest(e.to_string()),
            other => AssistantError::internal(other),
        }
    }
}

impl From<StoreError> for AssistantError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(what) => AssistantError::NotFound(what),
            other => AssistantError::internal(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskRequest {
    pub question: String,
    /// Write the exchange into the session index when the answer is confident.
    #[serde(default)]
    pub ingest: bool,
    /// Continue an existing session instead of opening a new one.
    #[serde(default)]
    pub session_id: Option<Uuid>,
    /// Per-run factors; the service defaults apply when absent.
    #[serde(default)]
    pub run: Option<RunConfig>,
}

impl AskRequest {
    pub fn new(question: impl Into<String>) -> Self {
        Self {
            question: question.into(),
            ingest: false,
            session_id: None,
            run: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AskOutcome {
    Answered,
    Irrelevant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub session_id: Uuid,
    pub outcome: AskOutcome,
    pub answer: String,
    pub citations: Vec<CitedEvidence>,
    pub confidence: f64,
    pub abstained: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disclaimer: Option<String>,
    pub iterations: u32,
    pub claims: Vec<ClaimEvidenceRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<FidelityReport>,
    pub usage: CompletionUsage,
}

impl From<RunOutcome> for AskResponse {
    fn from(o: RunOutcome) -> Self {
        match o {
            RunOutcome::Irrelevant {
                session_id,
                refusal,
                usage,
            } => AskResponse {
                session_id,
                outcome: AskOutcome::Irrelevant,
                answer: refusal,
                citations: vec![],
                confidence: 0.0,
                abstained: false,
                disclaimer: None,
                iterations: 0,
                claims: vec![],
                fidelity: None,
                usage,
            },
            RunOutcome::Answered(a) => AskResponse {
                session_id: a.session_id,
                outcome: AskOutcome::Answered,
                answer: a.answer_text,
                citations: a.citations,
                confidence: a.final_confidence.value(),
                abstained: a.abstained,
                disclaimer: a.disclaimer,
                iterations: a.iterations,
                claims: a.claim_table,
                fidelity: a.fidelity,
                usage: a.usage,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadResponse {
    pub canonical: CanonicalId,
    /// `requeued` or `needs-manual-fix`.
    pub status: String,
    pub doc_status: DocStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    pub status: String,
    pub provider: String,
    pub chunks: usize,
    pub metrics_rows: usize,
    pub missing: usize,
}

pub struct Assistant {
    engine: Engine,
    pipeline: Pipeline,
    /// Where stores are saved after mutating calls; `None` keeps them in memory.
    data_dir: Option<PathBuf>,
    /// Serializes store saves.
    save_lock: RwLock<()>,
}

impl std::fmt::Debug for Assistant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Assistant")
            .field("engine", &self.engine)
            .field("data_dir", &self.data_dir)
            .finish_non_exhaustive()
    }
}

fn load_err(e: impl std::fmt::Display) -> AssistantError {
    AssistantError::internal(format!("loading stores: {e}"))
}

impl Assistant {
    /// Assembles a facade from parts that already share their stores. The
    /// engine needs a session store for the session endpoints.
    pub fn new(engine: Engine, pipeline: Pipeline) -> Self {
        Self {
            engine,
            pipeline,
            data_dir: None,
            save_lock: RwLock::new(()),
        }
    }

    /// Loads stores from `cfg.data_dir` (empty when absent) and wires the
    /// engine and pipeline over them. `corpus` backs crawling and snowballing.
    pub fn open(cfg: &ServiceConfig, corpus: Option<SyntheticCorpus>) -> Result<Self, AssistantError> {
        cfg.validate().map_err(|e| AssistantError::BadRequest(e.to_string()))?;
        let indexes = persist::load_set(&cfg.index_dir(), cfg.embedding_dim).map_err(load_err)?;
        let retriever = Retriever::new(
            Arc::new(HashEmbedder::new(cfg.embedding_dim, cfg.embedding_seed)),
            Arc::new(RwLock::new(indexes)),
        );
        let metrics = MetricsTable::load(&cfg.metrics_path()).map_err(load_err)?.shared();
        let state = IngestState::load(&cfg.ingest_state_path()).map_err(load_err)?;
        let sessions = Arc::new(SessionStore::open(cfg.sessions_dir()).map_err(load_err)?);
        let gateway = Arc::new(cfg.gateway().map_err(load_err)?);

        let stores = Stores::new(retriever.clone(), metrics);
        let pipeline = Pipeline::from_corpus(Arc::new(corpus.unwrap_or_default()), stores).with_state(state);
        let engine = Engine::new(gateway, retriever, cfg.engine.clone()).with_sessions(sessions);
        Ok(Self {
            engine,
            pipeline,
            data_dir: Some(cfg.data_dir.clone()),
            save_lock: RwLock::new(()),
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    /// Writes indexes, the metrics table and the ingest state to the data
    /// directory, if there is one.
    pub fn save(&self) -> Result<(), AssistantError> {
        let Some(dir) = &self.data_dir else { return Ok(()) };
        let _g = self.save_lock.write().unwrap_or_else(|p| p.into_inner());
        let cfg = ServiceConfig {
            data_dir: dir.clone(),
            ..Default::default()
        };
        let stores = self.pipeline.stores();
        persist::save_set(&stores.retriever.read(), &cfg.index_dir()).map_err(AssistantError::internal)?;
        stores
            .metrics
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .save(&cfg.metrics_path())?;
        self.pipeline.state().save(&cfg.ingest_state_path())?;
        Ok(())
    }

    /// Runs one question end to end.
    pub fn ask(&self, req: &AskRequest) -> Result<AskResponse, AssistantError> {
        if req.question.trim().is_empty() {
            return Err(AssistantError::BadRequest("question must not be empty".into()));
        }
        let outcome = match (req.session_id, &req.run) {
            (Some(id), _) => {
                let mut ctx = self.engine.resume_session(id, &req.question, req.ingest)?;
                self.engine.run_question(&mut ctx)?
            }
            (None, Some(run)) => self.engine.ask_with(&req.question, req.ingest, run)?,
            (None, None) => self.engine.ask(&req.question, req.ingest)?,
        };
        if req.ingest {
            self.save()?;
        }
        Ok(outcome.into())
    }

    fn sessions_store(&self) -> Result<&Arc<SessionStore>, AssistantError> {
        self.engine
            .sessions()
            .ok_or_else(|| AssistantError::internal("no session store configured"))
    }

    pub fn sessions(&self) -> Result<Vec<SessionSummary>, AssistantError> {
        Ok(self.sessions_store()?.list()?)
    }

    pub fn session(&self, id: Uuid) -> Result<SessionRecord, AssistantError> {
        Ok(self.sessions_store()?.load_session(id)?)
    }

    pub fn missing_list(&self) -> Vec<MissingEntry> {
        self.pipeline.state().missing.entries().cloned().collect()
    }

    /// Re-enters a stalled document with curator-supplied bytes.
    pub fn upload(&self, canonical: &str, bytes: &[u8]) -> Result<UploadResponse, AssistantError> {
        let id = CanonicalId::parse(canonical)
            .or_else(|_| CanonicalId::doi(canonical))
            .map_err(|e| AssistantError::BadRequest(format!("canonical id {canonical:?}: {e}")))?;
        let (status, rec) = self.pipeline.requeue_upload(&id, bytes)?;
        self.save()?;
        Ok(UploadResponse {
            canonical: id,
            status: status.as_str().to_string(),
            doc_status: rec.status,
        })
    }

    /// One ingestion pass over the keyword matrix.
    pub fn ingest(&self, axes: &KeywordAxes) -> Result<IngestReport, AssistantError> {
        let report = self.pipeline.run(axes)?;
        self.save()?;
        Ok(report)
    }

    pub fn health(&self) -> HealthReport {
        let stores = self.pipeline.stores();
        let chunks = stores.retriever.read().iter().map(|(_, ix)| ix.len()).sum();
        let metrics_rows = stores.metrics.read().unwrap_or_else(|p| p.into_inner()).len();
        HealthReport {
            status: "ok".into(),
            provider: self.engine.gateway().provider().name().to_string(),
            chunks,
            metrics_rows,
            missing: self.pipeline.state().missing.len(),
        }
    }
}
