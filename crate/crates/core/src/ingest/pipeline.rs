//! The ingestion run: crawl, snowball, dedup, fetch, parse, extract, write.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::corpus::SyntheticCorpus;
use super::dedup::{DedupDecision, DedupKey, DedupStore};
use super::dual_write::{dual_write, FaultPoint, Stores, WriteOutcome};
use super::extract::{extract_deterministic, extract_deterministic_text, extract_reasoning, select_excerpt};
use super::matrix::{expand_matrix, KeywordAxes};
use super::missing::MissingList;
use super::parse::{parse_document, DocumentParser, SyntheticPdfParser};
use super::schedule::Scheduler;
use super::snowball::{snowball, CitationGraph, SnowballResult};
use super::sources::{crawl_tiers, DocumentFetcher, SourceAdapter, TierAdapter};
use super::{DocStatus, DocumentRecord, IngestError};
use crate::citation::{sha1_hex, CanonicalId};
use crate::clock::{self, SharedClock};
use crate::gateway::{Gateway, ModelRoleBinding};
use crate::retrieval::{chunk_text, persist, ChunkMetadata, CORPUS_INDEX};
use crate::store::StoreError;

/// Everything the pipeline remembers between runs besides the two stores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestState {
    pub records: BTreeMap<CanonicalId, DocumentRecord>,
    pub dedup: DedupStore,
    pub missing: MissingList,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    records: Vec<DocumentRecord>,
    dedup: Vec<DedupKey>,
    missing: MissingList,
}

impl IngestState {
    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let file = StateFile {
            records: self.records.values().cloned().collect(),
            dedup: self.dedup.keys(),
            missing: self.missing.clone(),
        };
        let json = serde_json::to_vec_pretty(&file).map_err(|e| StoreError::Serde(e.to_string()))?;
        crate::store::write_atomic(path, &json)
    }

    /// A missing file yields an empty state.
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(e) => return Err(e.into()),
        };
        let file: StateFile = serde_json::from_slice(&bytes).map_err(|e| StoreError::Serde(e.to_string()))?;
        Ok(Self {
            records: file.records.into_iter().map(|r| (r.canonical.clone(), r)).collect(),
            dedup: DedupStore::from_keys(file.dedup),
            missing: file.missing,
        })
    }

    pub fn count(&self, status: DocStatus) -> usize {
        self.records.values().filter(|r| r.status == status).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub tuples: usize,
    pub candidates: usize,
    pub duplicates: usize,
    pub ingested: usize,
    pub abstract_only: usize,
    pub needs_manual_fix: usize,
    /// Tuples for which every source tier failed.
    pub failed_tuples: Vec<String>,
    /// Snowballed identifiers no fetcher could resolve.
    pub unresolved: usize,
    pub snowball: Option<SnowballResult>,
}

/// Result of a curator upload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UploadStatus {
    Requeued,
    NeedsManualFix,
}

impl UploadStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            UploadStatus::Requeued => "requeued",
            UploadStatus::NeedsManualFix => "needs-manual-fix",
        }
    }
}

struct Reasoner {
    gateway: Arc<Gateway>,
    binding: ModelRoleBinding,
    budget: u32,
}

pub struct Pipeline {
    adapters: Vec<Arc<dyn SourceAdapter>>,
    graph: Arc<dyn CitationGraph>,
    fetcher: Arc<dyn DocumentFetcher>,
    parser: Arc<dyn DocumentParser>,
    reasoner: Option<Reasoner>,
    stores: Stores,
    state: Mutex<IngestState>,
    scheduler: Scheduler,
    clock: SharedClock,
    index: String,
    fault: Option<FaultPoint>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field(
                "adapters",
                &self.adapters.iter().map(|a| a.name().to_string()).collect::<Vec<_>>(),
            )
            .field("parser", &self.parser.name())
            .field("index", &self.index)
            .finish_non_exhaustive()
    }
}

impl Pipeline {
    pub fn new(
        adapters: Vec<Arc<dyn SourceAdapter>>,
        graph: Arc<dyn CitationGraph>,
        fetcher: Arc<dyn DocumentFetcher>,
        stores: Stores,
    ) -> Self {
        Self {
            adapters,
            graph,
            fetcher,
            parser: Arc::new(SyntheticPdfParser),
            reasoner: None,
            stores,
            state: Mutex::new(IngestState::default()),
            scheduler: Scheduler::monthly(None),
            clock: clock::system(),
            index: CORPUS_INDEX.to_string(),
            fault: None,
        }
    }

    /// Five tier adapters, the citation graph and the fetcher all served from
    /// one synthetic corpus.
    pub fn from_corpus(corpus: Arc<SyntheticCorpus>, stores: Stores) -> Self {
        Self::new(TierAdapter::all_tiers(corpus.clone()), corpus.clone(), corpus, stores)
    }

    pub fn with_parser(mut self, parser: Arc<dyn DocumentParser>) -> Self {
        self.parser = parser;
        self
    }

    /// Enables the model-based extraction pass.
    pub fn with_reasoning(mut self, gateway: Arc<Gateway>, binding: ModelRoleBinding, budget: u32) -> Self {
        self.reasoner = Some(Reasoner {
            gateway,
            binding,
            budget,
        });
        self
    }

    pub fn with_state(self, state: IngestState) -> Self {
        *self.lock() = state;
        self
    }

    pub fn with_scheduler(mut self, scheduler: Scheduler) -> Self {
        self.scheduler = scheduler;
        self
    }

    pub fn with_clock(mut self, clock: SharedClock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_index(mut self, name: &str) -> Self {
        self.index = name.to_string();
        self
    }

    /// Injects a store fault into every write (for failure-routing tests).
    pub fn with_fault(mut self, fault: Option<FaultPoint>) -> Self {
        self.fault = fault;
        self
    }

    pub fn stores(&self) -> &Stores {
        &self.stores
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    fn lock(&self) -> MutexGuard<'_, IngestState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn state(&self) -> IngestState {
        self.lock().clone()
    }

    pub fn missing_export(&self) -> String {
        self.lock().missing.export()
    }

    /// Byte exports of every store, keyed by a stable name: each vector
    /// index, the metrics table (CSV), the dedup table and the Missing-List.
    pub fn store_exports(&self) -> Result<BTreeMap<String, Vec<u8>>, IngestError> {
        let mut out = BTreeMap::new();
        for (name, ix) in self.stores.retriever.read().iter() {
            out.insert(format!("index/{name}"), persist::export_index(ix));
        }
        let csv = self.stores.metrics.read().unwrap_or_else(|p| p.into_inner()).to_csv()?;
        out.insert("metrics.csv".into(), csv.into_bytes());
        let state = self.lock();
        out.insert("dedup.jsonl".into(), state.dedup.export().into_bytes());
        out.insert("missing.jsonl".into(), state.missing.export().into_bytes());
        Ok(out)
    }

    /// Runs when the scheduler says a run is due and none is in flight.
    pub fn run_scheduled(&self, axes: &KeywordAxes) -> Option<Result<IngestReport, IngestError>> {
        let guard = self.scheduler.tick(self.clock.now())?;
        let result = self.run(axes);
        if result.is_ok() {
            guard.complete(self.clock.now());
        }
        Some(result)
    }

    /// One full pass over the keyword matrix.
    pub fn run(&self, axes: &KeywordAxes) -> Result<IngestReport, IngestError> {
        let tuples = expand_matrix(axes)?;
        let mut report = IngestReport {
            tuples: tuples.len(),
            ..Default::default()
        };
        let mut candidates = Vec::new();
        for tuple in &tuples {
            match crawl_tiers(tuple, &self.adapters) {
                Ok(found) => candidates.extend(found),
                Err(IngestError::AllTiersFailed(q)) => {
                    tracing::warn!(tuple = %q, "every tier failed; tuple skipped this run");
                    report.failed_tuples.push(q);
                }
                Err(e) => return Err(e),
            }
        }
        report.candidates = candidates.len();

        let mut state = self.lock();
        let mut seeds: Vec<CanonicalId> = Vec::new();
        for rec in candidates {
            if !seeds.contains(&rec.canonical) {
                seeds.push(rec.canonical.clone());
            }
            self.process_candidate(&mut state, rec, &mut report)?;
        }

        let expansion = snowball(&seeds, self.graph.as_ref(), &state.dedup);
        for id in &expansion.discovered {
            match self.fetcher.resolve(id) {
                Some(rec) => self.process_candidate(&mut state, rec, &mut report)?,
                None => report.unresolved += 1,
            }
        }
        report.snowball = Some(expansion);
        tracing::info!(
            candidates = report.candidates,
            ingested = report.ingested,
            abstract_only = report.abstract_only,
            manual = report.needs_manual_fix,
            duplicates = report.duplicates,
            "ingestion run finished"
        );
        Ok(report)
    }

    fn process_candidate(
        &self,
        state: &mut IngestState,
        mut rec: DocumentRecord,
        report: &mut IngestReport,
    ) -> Result<(), IngestError> {
        if state.dedup.dedup_gate(&rec.dedup_key())? == DedupDecision::Duplicate {
            report.duplicates += 1;
            return Ok(());
        }
        match self.fetcher.fetch_pdf(&rec) {
            None => {
                self.handle_paywall(state, &mut rec)?;
                match rec.status {
                    DocStatus::AbstractOnly => report.abstract_only += 1,
                    _ => report.needs_manual_fix += 1,
                }
            }
            Some(bytes) => {
                self.ingest_full_text(&mut rec, &bytes)?;
                match rec.status {
                    DocStatus::Ingested => report.ingested += 1,
                    _ => report.needs_manual_fix += 1,
                }
            }
        }
        state.records.insert(rec.canonical.clone(), rec);
        Ok(())
    }

    fn metadata(rec: &DocumentRecord) -> ChunkMetadata {
        ChunkMetadata {
            title: rec.title.clone(),
            authors: rec.authors.clone(),
            year: rec.year(),
            venue: rec.venue.clone(),
            tier: Some(rec.tier),
        }
    }

    /// Stores only the abstract and lists the document for a curator upload.
    fn handle_paywall(&self, state: &mut IngestState, rec: &mut DocumentRecord) -> Result<(), IngestError> {
        let chunks = chunk_text(&rec.canonical, &rec.abstract_text, &Self::metadata(rec), 0);
        let metrics = extract_deterministic_text(&rec.abstract_text);
        let now = self.clock.now();
        match dual_write(rec, chunks, &metrics, &self.stores, &self.index, self.fault, now)? {
            WriteOutcome::Committed { .. } => {
                rec.set_status(DocStatus::AbstractOnly)?;
                state.missing.add(&rec.canonical, &rec.title, rec.tier, now);
            }
            WriteOutcome::RolledBack { reason } => {
                rec.note = Some(reason);
                rec.set_status(DocStatus::NeedsManualFix)?;
            }
        }
        Ok(())
    }

    /// Parse, extract and write a document whose bytes are in hand. The
    /// record must be `New`; it ends `Ingested` or `NeedsManualFix`.
    fn ingest_full_text(&self, rec: &mut DocumentRecord, bytes: &[u8]) -> Result<(), IngestError> {
        let doc = match parse_document(bytes, self.parser.as_ref()) {
            Ok(doc) => doc,
            Err(e) => {
                tracing::warn!(doc = %rec.canonical, error = %e, "parse failed; routed to manual fix");
                rec.note = Some(e.to_string());
                return rec.set_status(DocStatus::NeedsManualFix);
            }
        };
        rec.set_status(DocStatus::Parsed)?;
        let mut metrics = extract_deterministic(&doc);
        if let Some(r) = &self.reasoner {
            let excerpt = select_excerpt(&rec.abstract_text, &doc);
            metrics = extract_reasoning(&excerpt, &metrics, &r.gateway, &r.binding, r.budget);
        }
        let body = doc.full_text();
        let text = if rec.abstract_text.trim().is_empty() {
            body
        } else {
            format!("{}\n\n{}", rec.abstract_text.trim(), body)
        };
        let chunks = chunk_text(&rec.canonical, &text, &Self::metadata(rec), 0);
        match dual_write(
            rec,
            chunks,
            &metrics,
            &self.stores,
            &self.index,
            self.fault,
            self.clock.now(),
        )? {
            WriteOutcome::Committed { .. } => {
                rec.note = None;
                rec.set_status(DocStatus::Ingested)
            }
            WriteOutcome::RolledBack { reason } => {
                rec.note = Some(reason);
                rec.set_status(DocStatus::NeedsManualFix)
            }
        }
    }

    /// Re-enters a stalled document at the parsing stage with curator-supplied
    /// bytes. The Missing-List entry is cleared only on success.
    pub fn requeue_upload(
        &self,
        canonical: &CanonicalId,
        bytes: &[u8],
    ) -> Result<(UploadStatus, DocumentRecord), IngestError> {
        let mut state = self.lock();
        let rec = state
            .records
            .get(canonical)
            .filter(|r| matches!(r.status, DocStatus::AbstractOnly | DocStatus::NeedsManualFix))
            .cloned()
            .ok_or_else(|| IngestError::NotFound(canonical.to_string()))?;
        if bytes.is_empty() {
            return Err(IngestError::EmptyInput("uploaded file".into()));
        }
        let mut rec = rec;
        rec.set_status(DocStatus::New)?;
        rec.sha1_pdf = Some(sha1_hex(bytes));
        state.dedup.record(&rec.dedup_key());
        self.ingest_full_text(&mut rec, bytes)?;
        let status = if rec.status == DocStatus::Ingested {
            state.missing.remove(canonical);
            UploadStatus::Requeued
        } else {
            UploadStatus::NeedsManualFix
        };
        state.records.insert(canonical.clone(), rec.clone());
        Ok((status, rec))
    }

    /// Decides whether a run is due at `now` without starting one.
    pub fn is_due(&self, now: DateTime<Utc>) -> bool {
        super::schedule::scheduler_tick(now, self.scheduler.last_run(), 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{render_synthetic_pdf, CorpusDocument, CorpusKeywords, Section, StructuredDocument};
    use crate::retrieval::{HashEmbedder, Retriever};
    use crate::store::MetricsTable;

    fn corpus() -> (Arc<SyntheticCorpus>, CanonicalId, CanonicalId) {
        let mut c = SyntheticCorpus::new();
        let kw = CorpusKeywords {
            platform: "silicon".into(),
            device_class: "modulator".into(),
            speed_marker: "100G".into(),
        };
        let doc = |doi: &str, pdf: Option<&str>| CorpusDocument {
            doi: Some(doi.into()),
            url: None,
            title: format!("Paper {doi}"),
            authors: vec![],
            pub_date: "2021-06-01".into(),
            venue: None,
            tier: 1,
            keywords: kw.clone(),
            abstract_text: "A compact modulator.".into(),
            pdf: pdf.map(str::to_string),
        };
        let open = c.add_document("open", doc("10.7/open", Some("open.pdf"))).unwrap();
        let closed = c.add_document("closed", doc("10.7/closed", None)).unwrap();
        let body = StructuredDocument {
            title: "Open".into(),
            sections: vec![Section {
                heading: "Results".into(),
                paragraphs: vec!["We measure a 3-dB bandwidth of 40 GHz.".into()],
            }],
            references: vec![],
        };
        c.add_pdf("open.pdf", render_synthetic_pdf(&body));
        c.add_edge(open.clone(), closed.clone());
        (Arc::new(c), open, closed)
    }

    fn pipeline(c: Arc<SyntheticCorpus>) -> Pipeline {
        let stores = Stores::new(
            Retriever::in_memory(Arc::new(HashEmbedder::new(32, 1))),
            MetricsTable::new().shared(),
        );
        Pipeline::from_corpus(c, stores)
    }

    fn axes() -> KeywordAxes {
        KeywordAxes::new(["silicon"], ["modulator"], ["100G"])
    }

    #[test]
    fn routes_open_and_paywalled() {
        let (c, open, closed) = corpus();
        let p = pipeline(c);
        let r = p.run(&axes()).unwrap();
        assert_eq!((r.ingested, r.abstract_only), (1, 1));
        let s = p.state();
        assert_eq!(s.records[&open].status, DocStatus::Ingested);
        assert_eq!(s.records[&closed].status, DocStatus::AbstractOnly);
        assert!(s.missing.contains(&closed));
        let m = p.stores().metrics.read().unwrap().get(&open).cloned().unwrap();
        assert_eq!(m.values.bandwidth_3db_ghz, Some(40.0));
    }

    #[test]
    fn upload_round_trip() {
        let (c, _, closed) = corpus();
        let p = pipeline(c);
        p.run(&axes()).unwrap();
        let unknown = CanonicalId::doi("10.7/none").unwrap();
        assert!(matches!(
            p.requeue_upload(&unknown, b"x"),
            Err(IngestError::NotFound(_))
        ));
        let (status, rec) = p.requeue_upload(&closed, b"%PDF-SYNTH 1.0\ntitle: cut").unwrap();
        assert_eq!(status, UploadStatus::NeedsManualFix);
        assert_eq!(rec.status, DocStatus::NeedsManualFix);
        assert!(p.state().missing.contains(&closed));
        let good = render_synthetic_pdf(&StructuredDocument {
            title: "Closed".into(),
            sections: vec![],
            references: vec![],
        });
        let (status, rec) = p.requeue_upload(&closed, &good).unwrap();
        assert_eq!(status, UploadStatus::Requeued);
        assert_eq!(
            rec.status_history,
            vec![
                DocStatus::New,
                DocStatus::AbstractOnly,
                DocStatus::New,
                DocStatus::NeedsManualFix,
                DocStatus::New,
                DocStatus::Parsed,
                DocStatus::Ingested
            ]
        );
        assert!(!p.state().missing.contains(&closed));
    }

    #[test]
    fn state_file_round_trip() {
        let (c, _, _) = corpus();
        let p = pipeline(c);
        p.run(&axes()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ingest.json");
        p.state().save(&path).unwrap();
        assert_eq!(IngestState::load(&path).unwrap(), p.state());
    }
}
