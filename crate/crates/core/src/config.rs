//! Run and service configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::citation::FidelityPolicy;
use crate::gateway::{
    Gateway, GatewayError, ModelRoleBinding, OpenAiCompatible, Provider, RateTable, ReasoningLevel, Role,
    SimulatedProvider, DEFAULT_SCHEMA_BUDGET,
};
use crate::retrieval::{RetrievalConfig, HASH_EMBEDDER_DIM};

pub const DEFAULT_RELEVANCE_MODEL: &str = "gpt-4o-mini";
pub const DEFAULT_CONFIDENCE_MODEL: &str = "o4-mini";
pub const DEFAULT_KNOWLEDGE_MODEL: &str = "o4-mini";
pub const DEFAULT_FAST_MODEL: &str = "gpt-4o-mini";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config file {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config parse: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// The independent factors of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub system_id: String,
    pub question_id: String,
    pub relevance_model: String,
    pub confidence_model: String,
    pub knowledge_model: String,
    /// Retrieval depth: the number of chunks kept after pooling.
    pub retrieval_k: usize,
    pub reasoning_level: ReasoningLevel,
    pub temperature: Option<f64>,
    pub allow_online_search: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system_id: "gated-rag".into(),
            question_id: String::new(),
            relevance_model: DEFAULT_RELEVANCE_MODEL.into(),
            confidence_model: DEFAULT_CONFIDENCE_MODEL.into(),
            knowledge_model: DEFAULT_KNOWLEDGE_MODEL.into(),
            retrieval_k: 12,
            reasoning_level: ReasoningLevel::Medium,
            temperature: None,
            allow_online_search: false,
            seed: 0,
        }
    }
}

/// Model bound to each role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoleModels {
    pub relevance: ModelRoleBinding,
    pub confidence: ModelRoleBinding,
    pub knowledge: ModelRoleBinding,
    pub fast_title: ModelRoleBinding,
    pub judge: ModelRoleBinding,
}

impl Default for RoleModels {
    fn default() -> Self {
        Self {
            relevance: ModelRoleBinding::new(Role::Relevance, DEFAULT_RELEVANCE_MODEL),
            confidence: ModelRoleBinding::new(Role::Confidence, DEFAULT_CONFIDENCE_MODEL)
                .with_effort(ReasoningLevel::Medium),
            knowledge: ModelRoleBinding::new(Role::Knowledge, DEFAULT_KNOWLEDGE_MODEL)
                .with_effort(ReasoningLevel::Medium),
            fast_title: ModelRoleBinding::new(Role::FastTitle, DEFAULT_FAST_MODEL),
            judge: ModelRoleBinding::new(Role::Judge, DEFAULT_CONFIDENCE_MODEL),
        }
    }
}

/// Everything the question engine needs besides its collaborators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub models: RoleModels,
    pub reasoning_level: ReasoningLevel,
    pub retrieval: RetrievalConfig,
    /// Answers whose final confidence is below this are withheld.
    pub answer_gate: f64,
    /// Maximum number of search rounds.
    pub retry_budget: u32,
    /// Attempts per model call before a schema failure aborts the run.
    pub schema_budget: u32,
    /// Results requested per sub-question.
    pub search_k: usize,
    pub allow_online_search: bool,
    /// Generate the logged-only provisional draft during the confidence check.
    pub fast_draft: bool,
    pub citation_policy: FidelityPolicy,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            models: RoleModels::default(),
            reasoning_level: ReasoningLevel::Medium,
            retrieval: RetrievalConfig::default(),
            answer_gate: 0.5,
            retry_budget: 5,
            schema_budget: DEFAULT_SCHEMA_BUDGET,
            search_k: 3,
            allow_online_search: false,
            fast_draft: true,
            citation_policy: FidelityPolicy::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.retrieval
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.answer_gate) {
            return Err(ConfigError::Invalid("answer_gate must lie in [0, 1]".into()));
        }
        if self.schema_budget == 0 {
            return Err(ConfigError::Invalid("schema_budget must be at least 1".into()));
        }
        if self.search_k == 0 {
            return Err(ConfigError::Invalid("search_k must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies the factors of one run on top of this configuration.
    /// `retrieval_k` becomes the pooled result size (`top_l`).
    pub fn for_run(&self, run: &RunConfig) -> EngineConfig {
        let mut cfg = self.clone();
        let level = run.reasoning_level;
        cfg.reasoning_level = level;
        cfg.models.relevance =
            ModelRoleBinding::new(Role::Relevance, &run.relevance_model).with_temperature(run.temperature);
        cfg.models.confidence = ModelRoleBinding::new(Role::Confidence, &run.confidence_model)
            .with_effort(level)
            .with_temperature(run.temperature);
        cfg.models.knowledge = ModelRoleBinding::new(Role::Knowledge, &run.knowledge_model)
            .with_effort(level)
            .with_temperature(run.temperature);
        cfg.retrieval.top_l = run.retrieval_k.max(1);
        cfg.allow_online_search = run.allow_online_search;
        cfg
    }
}

/// Service and CLI configuration, loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub engine: EngineConfig,
    /// Root directory for indexes, sessions and tables.
    pub data_dir: PathBuf,
    /// Optional rate table; the built-in one is used otherwise.
    pub rate_table: Option<PathBuf>,
    pub bind: String,
    pub embedding_dim: usize,
    pub embedding_seed: u64,
    /// Ignore credentials and use the offline simulated backend.
    pub offline: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            data_dir: PathBuf::from("data"),
            rate_table: None,
            bind: "127.0.0.1:8080".into(),
            embedding_dim: HASH_EMBEDDER_DIM,
            embedding_seed: 0x5eed,
            offline: false,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ServiceConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.engine.validate()?;
        if self.embedding_dim == 0 {
            return Err(ConfigError::Invalid("embedding_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn index_dir(&self) -> PathBuf {
        self.data_dir.join("index")
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.data_dir.join("sessions")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.data_dir.join("metrics.json")
    }

    pub fn ingest_state_path(&self) -> PathBuf {
        self.data_dir.join("ingest.json")
    }

    pub fn rates(&self) -> Result<RateTable, GatewayError> {
        match &self.rate_table {
            Some(p) => RateTable::load(p),
            None => Ok(RateTable::builtin()),
        }
    }

    /// Real provider when credentials are present, otherwise the offline
    /// simulated backend (with a warning).
    pub fn provider(&self) -> Arc<dyn Provider> {
        if !self.offline {
            if let Some(p) = OpenAiCompatible::from_env() {
                return Arc::new(p);
            }
            tracing::warn!(
                "no API credentials found ({} unset); falling back to the offline simulated backend",
                crate::gateway::API_KEY_ENV
            );
        }
        Arc::new(SimulatedProvider::default())
    }

    pub fn gateway(&self) -> Result<Gateway, GatewayError> {
        Ok(Gateway::new(self.provider(), self.rates()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = EngineConfig::default();
        assert_eq!(c.answer_gate, 0.5);
        assert_eq!(c.retry_budget, 5);
        assert_eq!(c.schema_budget, 3);
        assert_eq!(c.search_k, 3);
        c.validate().unwrap();
    }

    #[test]
    fn run_factors_override_engine() {
        let run = RunConfig {
            knowledge_model: "o3".into(),
            retrieval_k: 7,
            reasoning_level: ReasoningLevel::High,
            allow_online_search: true,
            ..Default::default()
        };
        let c = EngineConfig::default().for_run(&run);
        assert_eq!(c.models.knowledge.model_id, "o3");
        assert_eq!(c.models.knowledge.reasoning_effort, Some(ReasoningLevel::High));
        assert_eq!(c.retrieval.top_l, 7);
        assert!(c.allow_online_search);
    }

    #[test]
    fn toml_round_trip_and_validation() {
        let cfg = ServiceConfig::from_toml("data_dir = \"/tmp/x\"\n[engine]\nanswer_gate = 0.75\n").unwrap();
        assert_eq!(cfg.engine.answer_gate, 0.75);
        assert_eq!(cfg.engine.retry_budget, 5);
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ServiceConfig::from_toml(&text).unwrap(), cfg);
        assert!(ServiceConfig::from_toml("[engine]\nanswer_gate = 2.0\n").is_err());
        assert!(ServiceConfig::from_toml("[engine.retrieval]\nstart_k = 0\n").is_err());
    }
}
