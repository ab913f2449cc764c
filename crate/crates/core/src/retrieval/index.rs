//! Exact cosine-scan vector index and a set of named indexes.

use std::collections::BTreeMap;

use super::chunk::{rank_order, Chunk, ChunkKey, EvidenceItem};
use super::embed::{cosine, Embedder, EmbeddingVector};
use super::RetrievalError;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexedChunk {
    pub chunk: Chunk,
    pub vector: EmbeddingVector,
}

/// Exact (brute-force) cosine index keyed by `(doc_id, span_id)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dimension: usize,
    entries: BTreeMap<ChunkKey, IndexedChunk>,
}

/// Record of what an upsert replaced, so it can be undone.
#[derive(Debug, Clone, Default)]
pub struct UndoLog {
    inserted: Vec<ChunkKey>,
    replaced: Vec<IndexedChunk>,
}

impl UndoLog {
    pub fn is_empty(&self) -> bool {
        self.inserted.is_empty() && self.replaced.is_empty()
    }
}

impl VectorIndex {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            entries: BTreeMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &ChunkKey) -> Option<&IndexedChunk> {
        self.entries.get(key)
    }

    pub fn contains(&self, key: &ChunkKey) -> bool {
        self.entries.contains_key(key)
    }

    /// Entries in `(doc_id, span_id)` order.
    pub fn iter(&self) -> impl Iterator<Item = &IndexedChunk> {
        self.entries.values()
    }

    /// Upserts pre-embedded chunks. Returns how many keys were new.
    ///
    /// The batch is validated before anything is written, so a dimension
    /// mismatch or a duplicated key leaves the index untouched.
    pub fn index_add(&mut self, items: Vec<(Chunk, EmbeddingVector)>) -> Result<usize, RetrievalError> {
        self.index_add_logged(items).map(|(n, _)| n)
    }

    pub(crate) fn index_add_logged(
        &mut self,
        items: Vec<(Chunk, EmbeddingVector)>,
    ) -> Result<(usize, UndoLog), RetrievalError> {
        let mut seen = std::collections::BTreeSet::new();
        for (chunk, vector) in &items {
            if vector.dimension() != self.dimension {
                return Err(RetrievalError::DimensionMismatch {
                    expected: self.dimension,
                    got: vector.dimension(),
                });
            }
            if !seen.insert(chunk.key()) {
                return Err(RetrievalError::DuplicateKey(format!(
                    "{} # {}",
                    chunk.doc_id, chunk.span_id
                )));
            }
        }
        let mut undo = UndoLog::default();
        let mut added = 0;
        for (chunk, vector) in items {
            let key = chunk.key();
            match self.entries.insert(key.clone(), IndexedChunk { chunk, vector }) {
                Some(old) => undo.replaced.push(old),
                None => {
                    added += 1;
                    undo.inserted.push(key);
                }
            }
        }
        Ok((added, undo))
    }

    /// Embeds and upserts chunks.
    pub fn add_chunks(&mut self, embedder: &dyn Embedder, chunks: Vec<Chunk>) -> Result<usize, RetrievalError> {
        let items = chunks
            .into_iter()
            .map(|c| embedder.embed(&c.text).map(|v| (c, v)))
            .collect::<Result<Vec<_>, _>>()?;
        self.index_add(items)
    }

    pub(crate) fn undo(&mut self, log: UndoLog) {
        for key in log.inserted {
            self.entries.remove(&key);
        }
        for old in log.replaced {
            self.entries.insert(old.chunk.key(), old);
        }
    }

    pub fn remove(&mut self, key: &ChunkKey) -> Option<IndexedChunk> {
        self.entries.remove(key)
    }

    /// True top-k under cosine similarity, ties broken by `(doc_id, span_id)`.
    pub fn query_vector(&self, query: &EmbeddingVector, k: usize, iteration: u32) -> Vec<EvidenceItem> {
        if k == 0 || self.entries.is_empty() || query.dimension() != self.dimension {
            return Vec::new();
        }
        // Rank on borrowed entries; clone only the winners.
        let order = |a: &(f64, &IndexedChunk), b: &(f64, &IndexedChunk)| {
            b.0.total_cmp(&a.0)
                .then_with(|| a.1.chunk.doc_id.cmp(&b.1.chunk.doc_id))
                .then_with(|| a.1.chunk.span_id.cmp(&b.1.chunk.span_id))
        };
        let mut scored: Vec<(f64, &IndexedChunk)> =
            self.entries.values().map(|e| (cosine(query, &e.vector), e)).collect();
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        scored
            .into_iter()
            .map(|(similarity, e)| EvidenceItem {
                chunk: e.chunk.clone(),
                similarity,
                retrieved_at_iteration: iteration,
            })
            .collect()
    }
}

/// Named indexes sharing one embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSet {
    dimension: usize,
    indexes: BTreeMap<String, VectorIndex>,
}

pub const CORPUS_INDEX: &str = "corpus";
pub const SESSIONS_INDEX: &str = "sessions";

impl IndexSet {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            indexes: BTreeMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn index(&self, name: &str) -> Option<&VectorIndex> {
        self.indexes.get(name)
    }

    /// Returns the named index, creating it empty if needed.
    pub fn index_or_create(&mut self, name: &str) -> &mut VectorIndex {
        let dim = self.dimension;
        self.indexes
            .entry(name.to_string())
            .or_insert_with(|| VectorIndex::new(dim))
    }

    pub fn insert_index(&mut self, name: &str, index: VectorIndex) -> Result<(), RetrievalError> {
        if index.dimension() != self.dimension {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dimension,
                got: index.dimension(),
            });
        }
        self.indexes.insert(name.to_string(), index);
        Ok(())
    }

    pub(crate) fn remove_index(&mut self, name: &str) -> Option<VectorIndex> {
        self.indexes.remove(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.indexes.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &VectorIndex)> {
        self.indexes.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn total_len(&self) -> usize {
        self.indexes.values().map(VectorIndex::len).sum()
    }

    /// Global top-k across every index.
    pub fn query_vector(&self, query: &EmbeddingVector, k: usize, iteration: u32) -> Vec<EvidenceItem> {
        let mut pooled: Vec<EvidenceItem> = self
            .indexes
            .values()
            .flat_map(|ix| ix.query_vector(query, k, iteration))
            .collect();
        pooled.sort_by(rank_order);
        dedup_keep_first(&mut pooled);
        pooled.truncate(k);
        pooled
    }
}

/// Drops repeated `(doc_id, span_id)` keys, keeping the first (best ranked)
/// occurrence. Input must already be in rank order.
pub(crate) fn dedup_keep_first(items: &mut Vec<EvidenceItem>) {
    let mut seen = std::collections::HashSet::new();
    items.retain(|e| seen.insert(e.key()));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citation::CanonicalId;
    use crate::retrieval::chunk::ChunkMetadata;

    fn chunk(doc: &str, span: u32) -> Chunk {
        Chunk {
            doc_id: CanonicalId::doi(&format!("10.1/{doc}")).unwrap(),
            span_id: span,
            text: format!("{doc} {span}"),
            char_offset: (0, 3),
            metadata: ChunkMetadata::default(),
        }
    }

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn add_counts_new_keys_and_upserts() {
        let mut ix = VectorIndex::new(2);
        let n = ix
            .index_add(vec![
                (chunk("a", 0), v(&[1.0, 0.0])),
                (chunk("a", 1), v(&[0.0, 1.0])),
                (chunk("b", 0), v(&[1.0, 1.0])),
            ])
            .unwrap();
        assert_eq!(n, 3);
        let mut replacement = chunk("a", 0);
        replacement.text = "new text".into();
        assert_eq!(ix.index_add(vec![(replacement, v(&[0.5, 0.5]))]).unwrap(), 0);
        assert_eq!(ix.len(), 3);
        assert_eq!(ix.get(&chunk("a", 0).key()).unwrap().chunk.text, "new text");
    }

    #[test]
    fn wrong_dimension_is_rejected_without_partial_writes() {
        let mut ix = VectorIndex::new(2);
        let err = ix
            .index_add(vec![
                (chunk("a", 0), v(&[1.0, 0.0])),
                (chunk("a", 1), v(&[1.0, 0.0, 0.0])),
            ])
            .unwrap_err();
        assert!(matches!(err, RetrievalError::DimensionMismatch { expected: 2, got: 3 }));
        assert!(ix.is_empty());
    }

    #[test]
    fn singleton_and_oversized_k() {
        let mut ix = VectorIndex::new(2);
        ix.index_add(vec![(chunk("a", 0), v(&[1.0, 0.0]))]).unwrap();
        let q = v(&[1.0, 1.0]);
        let hits = ix.query_vector(&q, 5, 0);
        assert_eq!(hits.len(), 1);
        assert!((hits[0].similarity - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!(VectorIndex::new(2).query_vector(&q, 3, 0).is_empty());
    }

    #[test]
    fn ties_break_on_key_order() {
        let mut ix = VectorIndex::new(2);
        ix.index_add(vec![
            (chunk("b", 0), v(&[1.0, 0.0])),
            (chunk("a", 2), v(&[1.0, 0.0])),
            (chunk("a", 1), v(&[2.0, 0.0])),
        ])
        .unwrap();
        let hits = ix.query_vector(&v(&[1.0, 0.0]), 2, 0);
        let keys: Vec<_> = hits.iter().map(|h| (h.doc_id().to_string(), h.span_id())).collect();
        assert_eq!(keys, vec![("doi:10.1/a".to_string(), 1), ("doi:10.1/a".to_string(), 2)]);
    }

    #[test]
    fn undo_restores_previous_state() {
        let mut ix = VectorIndex::new(2);
        ix.index_add(vec![(chunk("a", 0), v(&[1.0, 0.0]))]).unwrap();
        let before = ix.clone();
        let mut changed = chunk("a", 0);
        changed.text = "changed".into();
        let (_, log) = ix
            .index_add_logged(vec![(changed, v(&[0.0, 1.0])), (chunk("c", 0), v(&[1.0, 1.0]))])
            .unwrap();
        assert_ne!(ix, before);
        ix.undo(log);
        assert_eq!(ix, before);
    }
}
