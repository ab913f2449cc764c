//! Full-factorial run manifests.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalError, QuestionSet};
use crate::config::{RunConfig, DEFAULT_CONFIDENCE_MODEL, DEFAULT_RELEVANCE_MODEL};
use crate::gateway::ReasoningLevel;

/// Levels of each factor. Every combination is run once per question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Factors {
    pub system_id: String,
    pub relevance_models: Vec<String>,
    pub confidence_models: Vec<String>,
    pub knowledge_models: Vec<String>,
    pub retrieval_ks: Vec<usize>,
    pub reasoning_levels: Vec<ReasoningLevel>,
    /// `None` leaves the model's default decoding.
    pub temperatures: Vec<Option<f64>>,
    pub allow_online_search: Vec<bool>,
}

impl Default for Factors {
    fn default() -> Self {
        Self {
            system_id: "gated-rag".into(),
            relevance_models: vec![DEFAULT_RELEVANCE_MODEL.into()],
            confidence_models: vec![DEFAULT_CONFIDENCE_MODEL.into()],
            knowledge_models: vec!["o3".into(), "o4-mini".into()],
            retrieval_ks: vec![4, 8, 12],
            reasoning_levels: ReasoningLevel::ALL.to_vec(),
            temperatures: vec![None],
            allow_online_search: vec![false],
        }
    }
}

impl Factors {
    pub fn from_toml(text: &str) -> Result<Self, EvalError> {
        let f: Factors = toml::from_str(text).map_err(|e| EvalError::Parse(e.to_string()))?;
        f.validate()?;
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let empty = [
            ("relevance_models", self.relevance_models.is_empty()),
            ("confidence_models", self.confidence_models.is_empty()),
            ("knowledge_models", self.knowledge_models.is_empty()),
            ("retrieval_ks", self.retrieval_ks.is_empty()),
            ("reasoning_levels", self.reasoning_levels.is_empty()),
            ("temperatures", self.temperatures.is_empty()),
            ("allow_online_search", self.allow_online_search.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(EvalError::Invalid(format!("factor {name} has no levels")));
        }
        if self.retrieval_ks.contains(&0) {
            return Err(EvalError::Invalid("retrieval_k must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of factor combinations.
    pub fn grid_size(&self) -> usize {
        self.relevance_models.len()
            * self.confidence_models.len()
            * self.knowledge_models.len()
            * self.retrieval_ks.len()
            * self.reasoning_levels.len()
            * self.temperatures.len()
            * self.allow_online_search.len()
    }

    /// Every combination, question and seed left blank.
    pub fn grid(&self) -> Vec<RunConfig> {
        let mut out = Vec::with_capacity(self.grid_size());
        for rel in &self.relevance_models {
            for conf in &self.confidence_models {
                for know in &self.knowledge_models {
                    for &k in &self.retrieval_ks {
                        for &level in &self.reasoning_levels {
                            for &t in &self.temperatures {
                                for &online in &self.allow_online_search {
                                    out.push(RunConfig {
                                        system_id: self.system_id.clone(),
                                        question_id: String::new(),
                                        relevance_model: rel.clone(),
                                        confidence_model: conf.clone(),
                                        knowledge_model: know.clone(),
                                        retrieval_k: k,
                                        reasoning_level: level,
                                        temperature: t,
                                        allow_online_search: online,
                                        seed: 0,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Grid × questions, shuffled with a seeded generator. Each run's own seed
/// is `seed + position` in the shuffled manifest, so the same inputs always
/// give the same manifest.
pub fn build_manifest(factors: &Factors, questions: &QuestionSet, seed: u64) -> Result<Vec<RunConfig>, EvalError> {
    factors.validate()?;
    if questions.is_empty() {
        return Err(EvalError::Invalid("no questions".into()));
    }
    let grid = factors.grid();
    let mut runs: Vec<RunConfig> = grid
        .iter()
        .flat_map(|cfg| {
            questions.questions.iter().map(move |q| RunConfig {
                question_id: q.id.clone(),
                ..cfg.clone()
            })
        })
        .collect();
    runs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for (i, r) in runs.iter_mut().enumerate() {
        r.seed = seed.wrapping_add(i as u64);
    }
    Ok(runs)
}
