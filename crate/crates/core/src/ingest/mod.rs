//! Literature ingestion: scheduled crawling over a keyword matrix, citation
//! snowballing, dedup, parsing, metric extraction and the transactional write
//! into the vector index and metrics table.

mod corpus;
mod dedup;
mod dual_write;
mod extract;
mod matrix;
mod missing;
mod parse;
mod pipeline;
mod schedule;
mod snowball;
mod sources;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::citation::CanonicalId;

pub use corpus::{CorpusDocument, CorpusKeywords, SyntheticCorpus, CITATIONS_FILE, DOCS_DIR, PDFS_DIR};
pub use dedup::{DedupDecision, DedupKey, DedupStore};
pub use dual_write::{dual_write, FaultPoint, StoreSnapshot, Stores, WriteOutcome};
pub use extract::{
    extract_deterministic, extract_deterministic_text, extract_reasoning, parse_extraction, select_excerpt,
    EXCERPT_TOKEN_LIMIT, METRICS_SCHEMA,
};
pub use matrix::{expand_matrix, KeywordAxes, KeywordTuple, DEFAULT_WINDOW_START};
pub use missing::{MissingEntry, MissingList};
pub use parse::{
    parse_document, render_synthetic_pdf, DocumentParser, PlainTextParser, Section, StructuredDocument,
    SyntheticPdfParser, SYNTH_PDF_END, SYNTH_PDF_MAGIC,
};
pub use pipeline::{IngestReport, IngestState, Pipeline, UploadStatus};
pub use schedule::{scheduler_tick, PipelinePhase, RunGuard, Scheduler};
pub use snowball::{snowball, CitationGraph, SnowballResult, WaveStats, SATURATION_FRACTION};
pub use sources::{crawl_tiers, DocumentFetcher, SourceAdapter, TierAdapter};

pub use crate::store::MetricValues as ExtractedMetrics;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("every source tier failed for {0}")]
    AllTiersFailed(String),
    #[error("source {source_name} failed: {message}")]
    Source { source_name: String, message: String },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("illegal status change {from:?} -> {to:?}")]
    IllegalStatus { from: DocStatus, to: DocStatus },
    #[error("corpus: {0}")]
    Corpus(String),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
    #[error(transparent)]
    Retrieval(#[from] crate::retrieval::RetrievalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DocStatus {
    New,
    AbstractOnly,
    Parsed,
    NeedsManualFix,
    Ingested,
}

impl DocStatus {
    /// Legal status changes. An upload puts a stalled record back to `New`.
    pub fn can_move_to(self, to: DocStatus) -> bool {
        use DocStatus::*;
        matches!(
            (self, to),
            (New, AbstractOnly)
                | (New, Parsed)
                | (New, NeedsManualFix)
                | (Parsed, Ingested)
                | (Parsed, NeedsManualFix)
                | (AbstractOnly, New)
                | (NeedsManualFix, New)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub canonical: CanonicalId,
    pub sha1_pdf: Option<String>,
    pub title: String,
    /// Source tier, 1 (most trusted) to 5.
    pub tier: u8,
    pub status: DocStatus,
    pub citations_out: Vec<CanonicalId>,
    pub cited_by: Vec<CanonicalId>,
    /// Publication date as given by the source (`YYYY`, `YYYY-MM` or `YYYY-MM-DD`).
    pub pub_date: String,
    #[serde(default)]
    pub authors: Vec<String>,
    #[serde(default)]
    pub venue: Option<String>,
    #[serde(default)]
    pub abstract_text: String,
    /// Every status the record has held, oldest first.
    pub status_history: Vec<DocStatus>,
    /// Why the record needs manual attention, when it does.
    #[serde(default)]
    pub note: Option<String>,
}

impl DocumentRecord {
    pub fn new(canonical: CanonicalId, title: impl Into<String>, tier: u8, pub_date: impl Into<String>) -> Self {
        Self {
            canonical,
            sha1_pdf: None,
            title: title.into(),
            tier,
            status: DocStatus::New,
            citations_out: Vec::new(),
            cited_by: Vec::new(),
            pub_date: pub_date.into(),
            authors: Vec::new(),
            venue: None,
            abstract_text: String::new(),
            status_history: vec![DocStatus::New],
            note: None,
        }
    }

    pub fn set_status(&mut self, to: DocStatus) -> Result<(), IngestError> {
        if !self.status.can_move_to(to) {
            return Err(IngestError::IllegalStatus { from: self.status, to });
        }
        self.status = to;
        self.status_history.push(to);
        Ok(())
    }

    pub fn year(&self) -> Option<i32> {
        self.pub_date.get(..4).and_then(|y| y.parse().ok())
    }

    pub fn dedup_key(&self) -> DedupKey {
        DedupKey::new(self.sha1_pdf.clone(), &self.canonical)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_machine() {
        let id = CanonicalId::doi("10.1/x").unwrap();
        let mut r = DocumentRecord::new(id, "T", 1, "2020");
        r.set_status(DocStatus::Parsed).unwrap();
        assert!(r.set_status(DocStatus::AbstractOnly).is_err());
        r.set_status(DocStatus::Ingested).unwrap();
        assert!(r.set_status(DocStatus::New).is_err());
        assert_eq!(
            r.status_history,
            vec![DocStatus::New, DocStatus::Parsed, DocStatus::Ingested]
        );
        assert_eq!(r.year(), Some(2020));
    }
}
