//! Embedding, vector indexes and dynamic-k retrieval.
//!
//! Retrieval escalates k in fixed batches until the mean cosine similarity of
//! the current result set reaches the configured threshold or k hits its
//! ceiling. With the default configuration the attempted k values are
//! 3, 6, 9, 12, cut short at the first k whose set clears 0.75. When several
//! named indexes are present, the ladder runs per index and the pooled result
//! is truncated to `top_l` before the mean is computed.

mod chunk;
mod embed;
mod index;
pub mod persist;

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chunk::{
    chunk_text, chunk_text_with, mean_similarity, rank_order, Chunk, ChunkKey, ChunkMetadata, EvidenceItem,
    CHUNK_OVERLAP_CHARS, CHUNK_WINDOW_CHARS,
};
pub(crate) use embed::tokenize;
pub use embed::{cosine, Embedder, EmbeddingVector, HashEmbedder, HASH_EMBEDDER_DIM};
pub(crate) use index::dedup_keep_first;
pub use index::{IndexSet, IndexedChunk, UndoLog, VectorIndex, CORPUS_INDEX, SESSIONS_INDEX};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("embedding failed: {0}")]
    Embedding(String),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: index has {expected}, vector has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("duplicate chunk key in batch: {0}")]
    DuplicateKey(String),
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error("index file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RetrievalError {
    /// Provider-side embedding failures may succeed on retry.
    pub fn is_retryable(&self) -> bool {
        matches!(self, RetrievalError::Embedding(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub start_k: usize,
    pub batch_increment: usize,
    pub max_k: usize,
    pub similarity_threshold: f64,
    pub top_l: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            start_k: 3,
            batch_increment: 3,
            max_k: 12,
            similarity_threshold: 0.75,
            top_l: 12,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        let bad = |m: &str| Err(RetrievalError::InvalidConfig(m.to_string()));
        if self.start_k == 0 {
            return bad("start_k must be at least 1");
        }
        if self.start_k > self.max_k {
            return bad("start_k must not exceed max_k");
        }
        if self.batch_increment == 0 {
            return bad("batch_increment must be at least 1");
        }
        if self.top_l == 0 {
            return bad("top_l must be at least 1");
        }
        if !(-1.0..=1.0).contains(&self.similarity_threshold) {
            return bad("similarity_threshold must lie in [-1, 1]");
        }
        Ok(())
    }
}

/// Result of a dynamic-k retrieval.
#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved {
    pub evidence: Vec<EvidenceItem>,
    /// Mean similarity after `top_l` truncation.
    pub mean_similarity: f64,
    /// The k values tried, per index name.
    pub ladders: BTreeMap<String, Vec<usize>>,
}

/// Runs the escalation ladder on one index.
pub fn dynamic_k_on_index(
    index: &VectorIndex,
    query: &EmbeddingVector,
    cfg: &RetrievalConfig,
    iteration: u32,
) -> (Vec<EvidenceItem>, Vec<usize>) {
    let mut k = cfg.start_k;
    let mut ladder = Vec::new();
    loop {
        let items = index.query_vector(query, k, iteration);
        ladder.push(k);
        if mean_similarity(&items) >= cfg.similarity_threshold || k >= cfg.max_k {
            return (items, ladder);
        }
        k = (k + cfg.batch_increment).min(cfg.max_k);
    }
}

/// Shared handle to the named indexes. Writers take the lock exclusively, so
/// readers observe either the state before or after a write.
pub type SharedIndexes = Arc<RwLock<IndexSet>>;

#[derive(Clone)]
pub struct Retriever {
    embedder: Arc<dyn Embedder>,
    indexes: SharedIndexes,
}

impl std::fmt::Debug for Retriever {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Retriever")
            .field("dimension", &self.embedder.dimension())
            .finish_non_exhaustive()
    }
}

impl Retriever {
    pub fn new(embedder: Arc<dyn Embedder>, indexes: SharedIndexes) -> Self {
        Self { embedder, indexes }
    }

    /// A retriever over a fresh, empty index set.
    pub fn in_memory(embedder: Arc<dyn Embedder>) -> Self {
        let dim = embedder.dimension();
        Self::new(embedder, Arc::new(RwLock::new(IndexSet::new(dim))))
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn indexes(&self) -> &SharedIndexes {
        &self.indexes
    }

    pub fn read(&self) -> RwLockReadGuard<'_, IndexSet> {
        self.indexes.read().unwrap_or_else(|p| p.into_inner())
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, IndexSet> {
        self.indexes.write().unwrap_or_else(|p| p.into_inner())
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        self.embedder.embed(text)
    }

    /// Embeds and upserts chunks into the named index.
    pub fn index_add(&self, index: &str, chunks: Vec<Chunk>) -> Result<usize, RetrievalError> {
        let items = chunks
            .into_iter()
            .map(|c| self.embedder.embed(&c.text).map(|v| (c, v)))
            .collect::<Result<Vec<_>, _>>()?;
        self.write().index_or_create(index).index_add(items)
    }

    /// Exact top-k across all indexes, similarity descending.
    pub fn query_topk(&self, query: &str, k: usize) -> Result<Vec<EvidenceItem>, RetrievalError> {
        let q = self.embedder.embed(query)?;
        Ok(self.read().query_vector(&q, k, 0))
    }

    pub fn dynamic_k_retrieve(&self, query: &str, cfg: &RetrievalConfig) -> Result<Retrieved, RetrievalError> {
        self.dynamic_k_retrieve_at(query, cfg, 0)
    }

    pub fn dynamic_k_retrieve_at(
        &self,
        query: &str,
        cfg: &RetrievalConfig,
        iteration: u32,
    ) -> Result<Retrieved, RetrievalError> {
        cfg.validate()?;
        let q = self.embedder.embed(query)?;
        let set = self.read();
        let mut pooled = Vec::new();
        let mut ladders = BTreeMap::new();
        for (name, index) in set.iter() {
            if index.is_empty() {
                continue;
            }
            let (items, ladder) = dynamic_k_on_index(index, &q, cfg, iteration);
            pooled.extend(items);
            ladders.insert(name.to_string(), ladder);
        }
        pooled.sort_by(rank_order);
        dedup_keep_first(&mut pooled);
        pooled.truncate(cfg.top_l);
        let mean = mean_similarity(&pooled);
        Ok(Retrieved {
            evidence: pooled,
            mean_similarity: mean,
            ladders,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citation::CanonicalId;

    #[test]
    fn default_config_matches_hyperparameter_table() {
        let c = RetrievalConfig::default();
        assert_eq!((c.start_k, c.batch_increment, c.max_k, c.top_l), (3, 3, 12, 12));
        assert_eq!(c.similarity_threshold, 0.75);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = RetrievalConfig::default();
        for bad in [
            RetrievalConfig { start_k: 0, ..base },
            RetrievalConfig { start_k: 13, ..base },
            RetrievalConfig {
                batch_increment: 0,
                ..base
            },
            RetrievalConfig { top_l: 0, ..base },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn empty_index_yields_empty_set_with_zero_mean() {
        let r = Retriever::in_memory(Arc::new(HashEmbedder::default()));
        let out = r.dynamic_k_retrieve("anything", &RetrievalConfig::default()).unwrap();
        assert!(out.evidence.is_empty());
        assert_eq!(out.mean_similarity, 0.0);
    }

    #[test]
    fn ladder_clamps_to_max_k() {
        let mut ix = VectorIndex::new(2);
        for i in 0..20u32 {
            let c = Chunk {
                doc_id: CanonicalId::doi("10.9/z").unwrap(),
                span_id: i,
                text: String::new(),
                char_offset: (0, 0),
                metadata: ChunkMetadata::default(),
            };
            ix.index_add(vec![(c, EmbeddingVector::new(vec![0.1, 1.0]).unwrap())])
                .unwrap();
        }
        let q = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let cfg = RetrievalConfig {
            max_k: 10,
            ..Default::default()
        };
        let (items, ladder) = dynamic_k_on_index(&ix, &q, &cfg, 0);
        assert_eq!(ladder, vec![3, 6, 9, 10]);
        assert_eq!(items.len(), 10);
    }
}
