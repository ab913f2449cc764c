//! All-or-nothing write into the vector index and the metrics table.
//!
//! Chunks are embedded before any lock is taken. Both stores are then locked
//! in a fixed order (index set, then metrics) and written; a failure at
//! either step undoes whatever already landed, so readers never observe one
//! write without the other.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{DocumentRecord, IngestError};
use crate::retrieval::{Chunk, IndexSet, Retriever};
use crate::store::{MetricValues, MetricsTable, SharedMetrics};

/// Injected failure used to exercise the rollback paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultPoint {
    /// Part of the chunk batch lands in the index, then the write fails.
    VectorWrite,
    /// The metrics row is written, then the write fails.
    MetricsWrite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum WriteOutcome {
    Committed { chunks_added: usize },
    RolledBack { reason: String },
}

impl WriteOutcome {
    pub fn is_committed(&self) -> bool {
        matches!(self, WriteOutcome::Committed { .. })
    }
}

/// The two stores a document lands in.
#[derive(Debug, Clone)]
pub struct Stores {
    pub retriever: Retriever,
    pub metrics: SharedMetrics,
}

/// Full copies of both stores, for before/after comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct StoreSnapshot {
    pub indexes: IndexSet,
    pub metrics: MetricsTable,
}

impl Stores {
    pub fn new(retriever: Retriever, metrics: SharedMetrics) -> Self {
        Self { retriever, metrics }
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        let indexes = self.retriever.read().clone();
        let metrics = self.metrics.read().unwrap_or_else(|p| p.into_inner()).clone();
        StoreSnapshot { indexes, metrics }
    }
}

/// Writes `chunks` into `index` and upserts the metrics row for `doc`.
///
/// Returns `RolledBack` (with both stores as they were before the call) when
/// either write fails or `fault` is injected. The metrics row is upserted
/// even when `metrics` is empty, so every ingested document has a row.
pub fn dual_write(
    doc: &DocumentRecord,
    chunks: Vec<Chunk>,
    metrics: &MetricValues,
    stores: &Stores,
    index: &str,
    fault: Option<FaultPoint>,
    now: DateTime<Utc>,
) -> Result<WriteOutcome, IngestError> {
    let items = match chunks
        .into_iter()
        .map(|c| stores.retriever.embed(&c.text).map(|v| (c, v)))
        .collect::<Result<Vec<_>, _>>()
    {
        Ok(items) => items,
        Err(e) => {
            return Ok(WriteOutcome::RolledBack {
                reason: format!("embedding failed: {e}"),
            })
        }
    };

    let mut set = stores.retriever.write();
    let mut table = stores.metrics.write().unwrap_or_else(|p| p.into_inner());
    let created = set.index(index).is_none();
    let discard_index = |set: &mut IndexSet| {
        if created {
            set.remove_index(index);
        }
    };

    let write_items = if fault == Some(FaultPoint::VectorWrite) {
        let half = items.len().div_ceil(2);
        items.into_iter().take(half).collect()
    } else {
        items
    };
    let (added, undo) = match set.index_or_create(index).index_add_logged(write_items) {
        Ok(ok) => ok,
        Err(e) => {
            discard_index(&mut set);
            return Ok(WriteOutcome::RolledBack {
                reason: format!("vector write failed: {e}"),
            });
        }
    };
    if fault == Some(FaultPoint::VectorWrite) {
        set.index_or_create(index).undo(undo);
        discard_index(&mut set);
        tracing::warn!(doc = %doc.canonical, "vector write failed; rolled back");
        return Ok(WriteOutcome::RolledBack {
            reason: "injected fault during vector write".into(),
        });
    }

    let prior = table.get(&doc.canonical).cloned();
    let result = table.upsert(doc.canonical.clone(), &doc.pub_date, metrics, now);
    let failure = match (result, fault) {
        (Err(e), _) => Some(format!("metrics write failed: {e}")),
        (Ok(_), Some(FaultPoint::MetricsWrite)) => Some("injected fault during metrics write".to_string()),
        (Ok(_), _) => None,
    };
    if let Some(reason) = failure {
        table.restore(&doc.canonical, prior);
        set.index_or_create(index).undo(undo);
        discard_index(&mut set);
        tracing::warn!(doc = %doc.canonical, %reason, "dual write rolled back");
        return Ok(WriteOutcome::RolledBack { reason });
    }
    Ok(WriteOutcome::Committed { chunks_added: added })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citation::CanonicalId;
    use crate::retrieval::{chunk_text, ChunkMetadata, HashEmbedder, CORPUS_INDEX};
    use crate::store::{MetricField, Provenance};
    use std::sync::Arc;

    fn stores() -> Stores {
        Stores::new(
            Retriever::in_memory(Arc::new(HashEmbedder::new(32, 7))),
            MetricsTable::new().shared(),
        )
    }

    fn doc(n: u32) -> (DocumentRecord, Vec<Chunk>, MetricValues) {
        let id = CanonicalId::doi(&format!("10.5/d{n}")).unwrap();
        let rec = DocumentRecord::new(id.clone(), "Doc", 1, "2021-04");
        let text = "lithium niobate modulator with low drive voltage ".repeat(60);
        let chunks = chunk_text(&id, &text, &ChunkMetadata::default(), 0);
        let mut m = MetricValues::default();
        m.set_number(MetricField::Bandwidth3dbGhz, 50.0 + n as f64, Provenance::Deterministic);
        (rec, chunks, m)
    }

    #[test]
    fn commit_writes_both() {
        let s = stores();
        let (rec, chunks, m) = doc(1);
        let n = chunks.len();
        let out = dual_write(&rec, chunks, &m, &s, CORPUS_INDEX, None, Utc::now()).unwrap();
        assert_eq!(out, WriteOutcome::Committed { chunks_added: n });
        let snap = s.snapshot();
        assert_eq!(snap.indexes.total_len(), n);
        assert_eq!(snap.metrics.len(), 1);
    }

    #[test]
    fn every_fault_restores_snapshot() {
        for fault in [FaultPoint::VectorWrite, FaultPoint::MetricsWrite] {
            for prefill in [false, true] {
                let s = stores();
                let (rec, chunks, m) = doc(1);
                if prefill {
                    dual_write(&rec, chunks.clone(), &m, &s, CORPUS_INDEX, None, Utc::now()).unwrap();
                    let (other, c2, m2) = doc(2);
                    dual_write(&other, c2, &m2, &s, CORPUS_INDEX, None, Utc::now()).unwrap();
                }
                let before = s.snapshot();
                let mut m = m.clone();
                m.set_number(MetricField::InsertionLossDb, 3.0, Provenance::Deterministic);
                let mut extra = chunks.clone();
                for c in &mut extra {
                    c.span_id += 100;
                }
                let out = dual_write(
                    &rec,
                    [chunks, extra].concat(),
                    &m,
                    &s,
                    CORPUS_INDEX,
                    Some(fault),
                    Utc::now(),
                )
                .unwrap();
                assert!(!out.is_committed(), "{fault:?}");
                assert_eq!(s.snapshot(), before, "{fault:?} prefill={prefill}");
            }
        }
    }

    #[test]
    fn bad_date_rolls_back_vectors() {
        let s = stores();
        let (mut rec, chunks, m) = doc(3);
        rec.pub_date = "sometime".into();
        let before = s.snapshot();
        let out = dual_write(&rec, chunks, &m, &s, CORPUS_INDEX, None, Utc::now()).unwrap();
        assert!(matches!(out, WriteOutcome::RolledBack { .. }));
        assert_eq!(s.snapshot(), before);
    }
}
