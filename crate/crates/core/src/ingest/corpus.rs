//! On-disk synthetic corpus that stands in for the literature portals.
//!
//! Layout:
//!
//! ```text
//! <root>/docs/*.json     one metadata record per document
//! <root>/pdfs/<file>     document bodies in the synthetic PDF format
//! <root>/citations.txt   one `citing -> cited` edge per line
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::snowball::CitationGraph;
use super::sources::DocumentFetcher;
use super::{DocumentRecord, IngestError};
use crate::citation::{canonicalize, sha1_hex, CanonicalId, RawReference};

pub const DOCS_DIR: &str = "docs";
pub const PDFS_DIR: &str = "pdfs";
pub const CITATIONS_FILE: &str = "citations.txt";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusKeywords {
    pub platform: String,
    pub device_class: String,
    pub speed_marker: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub title: String,
    #[serde(default)]
    pub authors: Vec<String>,
    pub pub_date: String,
    #[serde(default)]
    pub venue: Option<String>,
    pub tier: u8,
    pub keywords: CorpusKeywords,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    /// File name under `pdfs/`; absent for paywalled documents.
    #[serde(default)]
    pub pdf: Option<String>,
}

impl CorpusDocument {
    pub fn canonical(&self) -> Result<CanonicalId, IngestError> {
        canonicalize(&RawReference {
            doi: self.doi.clone(),
            url: self.url.clone(),
            title: Some(self.title.clone()),
            ..Default::default()
        })
        .map_err(|e| IngestError::Corpus(e.to_string()))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SyntheticCorpus {
    /// Documents keyed by file stem, so two files may share an identifier
    /// (for example a preprint and its published version).
    docs: BTreeMap<String, (CanonicalId, CorpusDocument)>,
    pdfs: BTreeMap<String, Vec<u8>>,
    edges: BTreeSet<(CanonicalId, CanonicalId)>,
}

fn parse_edge_side(s: &str) -> Result<CanonicalId, IngestError> {
    let s = s.trim();
    let parsed = if s.starts_with("http") {
        CanonicalId::url(s)
    } else {
        CanonicalId::parse(s).or_else(|_| CanonicalId::doi(s))
    };
    parsed.map_err(|e| IngestError::Corpus(format!("citation edge side {s:?}: {e}")))
}

impl SyntheticCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_document(&mut self, key: &str, doc: CorpusDocument) -> Result<CanonicalId, IngestError> {
        let id = doc.canonical()?;
        if !(1..=5).contains(&doc.tier) {
            return Err(IngestError::Corpus(format!("{key}: tier {} outside 1-5", doc.tier)));
        }
        self.docs.insert(key.to_string(), (id.clone(), doc));
        Ok(id)
    }

    pub fn add_pdf(&mut self, file: &str, bytes: Vec<u8>) {
        self.pdfs.insert(file.to_string(), bytes);
    }

    pub fn add_edge(&mut self, citing: CanonicalId, cited: CanonicalId) {
        self.edges.insert((citing, cited));
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// `(key, canonical id, document)` in key order.
    pub fn documents(&self) -> impl Iterator<Item = (&str, &CanonicalId, &CorpusDocument)> {
        self.docs.iter().map(|(k, (id, d))| (k.as_str(), id, d))
    }

    pub fn edges(&self) -> impl Iterator<Item = &(CanonicalId, CanonicalId)> {
        self.edges.iter()
    }

    pub fn pdf_bytes(&self, file: &str) -> Option<&[u8]> {
        self.pdfs.get(file).map(Vec::as_slice)
    }

    /// Builds the crawl record for one corpus entry, with its PDF hash and
    /// citation neighbors filled in.
    pub fn record_for(&self, key: &str) -> Option<DocumentRecord> {
        let (id, doc) = self.docs.get(key)?;
        let mut rec = DocumentRecord::new(id.clone(), doc.title.clone(), doc.tier, doc.pub_date.clone());
        rec.authors = doc.authors.clone();
        rec.venue = doc.venue.clone();
        rec.abstract_text = doc.abstract_text.clone();
        rec.sha1_pdf = doc.pdf.as_deref().and_then(|f| self.pdfs.get(f)).map(|b| sha1_hex(b));
        rec.citations_out = self.references(id);
        rec.cited_by = self.cited_by(id);
        Some(rec)
    }

    fn first_key_for(&self, id: &CanonicalId) -> Option<&str> {
        self.docs.iter().find(|(_, (i, _))| i == id).map(|(k, _)| k.as_str())
    }

    pub fn load(root: &Path) -> Result<Self, IngestError> {
        let mut corpus = Self::new();
        let docs_dir = root.join(DOCS_DIR);
        let mut files: Vec<_> = std::fs::read_dir(&docs_dir)
            .map_err(|e| IngestError::Corpus(format!("{}: {e}", docs_dir.display())))?
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        for path in files {
            let key = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let doc: CorpusDocument = serde_json::from_slice(&std::fs::read(&path)?)
                .map_err(|e| IngestError::Corpus(format!("{}: {e}", path.display())))?;
            if let Some(file) = &doc.pdf {
                let p = root.join(PDFS_DIR).join(file);
                match std::fs::read(&p) {
                    Ok(bytes) => corpus.add_pdf(file, bytes),
                    Err(e) => {
                        tracing::warn!(path = %p.display(), error = %e, "listed PDF missing; treating as paywalled")
                    }
                }
            }
            corpus.add_document(&key, doc)?;
        }
        let cites = root.join(CITATIONS_FILE);
        if cites.exists() {
            for (n, line) in std::fs::read_to_string(&cites)?.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (a, b) = line
                    .split_once("->")
                    .ok_or_else(|| IngestError::Corpus(format!("{CITATIONS_FILE}:{}: expected `a -> b`", n + 1)))?;
                corpus.add_edge(parse_edge_side(a)?, parse_edge_side(b)?);
            }
        }
        Ok(corpus)
    }

    pub fn write_to(&self, root: &Path) -> Result<(), IngestError> {
        std::fs::create_dir_all(root.join(DOCS_DIR))?;
        std::fs::create_dir_all(root.join(PDFS_DIR))?;
        for (key, (_, doc)) in &self.docs {
            let json = serde_json::to_vec_pretty(doc).map_err(|e| IngestError::Corpus(e.to_string()))?;
            std::fs::write(root.join(DOCS_DIR).join(format!("{key}.json")), json)?;
        }
        for (file, bytes) in &self.pdfs {
            std::fs::write(root.join(PDFS_DIR).join(file), bytes)?;
        }
        let edges: String = self.edges.iter().map(|(a, b)| format!("{a} -> {b}\n")).collect();
        std::fs::write(root.join(CITATIONS_FILE), edges)?;
        Ok(())
    }
}

impl CitationGraph for SyntheticCorpus {
    fn references(&self, id: &CanonicalId) -> Vec<CanonicalId> {
        self.edges
            .iter()
            .filter(|(a, _)| a == id)
            .map(|(_, b)| b.clone())
            .collect()
    }

    fn cited_by(&self, id: &CanonicalId) -> Vec<CanonicalId> {
        self.edges
            .iter()
            .filter(|(_, b)| b == id)
            .map(|(a, _)| a.clone())
            .collect()
    }
}

impl DocumentFetcher for SyntheticCorpus {
    fn resolve(&self, id: &CanonicalId) -> Option<DocumentRecord> {
        self.record_for(self.first_key_for(id)?)
    }

    fn fetch_pdf(&self, record: &DocumentRecord) -> Option<Vec<u8>> {
        let matching = self.docs.values().filter(|(i, _)| *i == record.canonical);
        let files: Vec<&str> = matching.filter_map(|(_, d)| d.pdf.as_deref()).collect();
        // Prefer the file whose hash the record carries.
        files
            .iter()
            .filter_map(|f| self.pdfs.get(*f))
            .find(|b| record.sha1_pdf.as_deref() == Some(sha1_hex(b).as_str()))
            .or_else(|| files.iter().find_map(|f| self.pdfs.get(*f)))
            .cloned()
    }
}
