//! Sources consulted during a refinement round.

use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::citation::{canonicalize, RawReference};
use crate::retrieval::{Chunk, ChunkMetadata, Retriever};

pub const SEARCH_URL_ENV: &str = "GATED_RAG_SEARCH_URL";

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("search provider unavailable: {0}")]
    Unavailable(String),
    #[error("search response malformed: {0}")]
    Malformed(String),
}

/// Returns passages for a sub-question. Similarity is scored by the caller,
/// so every source is ranked on the same embedding.
pub trait SearchProvider: Send + Sync {
    fn name(&self) -> &str;
    fn search(&self, query: &str, k: usize) -> Result<Vec<Chunk>, SearchError>;
}

/// Searches the local indexes; the default when online search is off.
#[derive(Debug, Clone)]
pub struct LocalIndexSearch {
    retriever: Retriever,
}

impl LocalIndexSearch {
    pub fn new(retriever: Retriever) -> Self {
        Self { retriever }
    }
}

impl SearchProvider for LocalIndexSearch {
    fn name(&self) -> &str {
        "local-index"
    }

    fn search(&self, query: &str, k: usize) -> Result<Vec<Chunk>, SearchError> {
        self.retriever
            .query_topk(query, k)
            .map(|items| items.into_iter().map(|e| e.chunk).collect())
            .map_err(|e| SearchError::Unavailable(e.to_string()))
    }
}

#[derive(Debug, Deserialize)]
struct HttpHit {
    #[serde(default)]
    doi: Option<String>,
    #[serde(default)]
    url: Option<String>,
    title: String,
    text: String,
    #[serde(default)]
    year: Option<i32>,
    #[serde(default)]
    span_id: u32,
}

/// A JSON search endpoint: `GET <base>?q=<query>&k=<k>` answering with an
/// array of `{doi?, url?, title, text, year?, span_id?}`.
pub struct HttpSearch {
    base_url: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpSearch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpSearch").field("base_url", &self.base_url).finish()
    }
}

impl HttpSearch {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base_url: base_url.to_string(),
            agent,
        }
    }

    pub fn from_env() -> Option<Self> {
        let url = std::env::var(SEARCH_URL_ENV).ok().filter(|u| !u.trim().is_empty())?;
        Some(Self::new(&url, Duration::from_secs(30)))
    }

    fn to_chunks(hits: Vec<HttpHit>) -> Vec<Chunk> {
        hits.into_iter()
            .filter_map(|h| {
                let reference = RawReference {
                    doi: h.doi,
                    url: h.url,
                    title: Some(h.title.clone()),
                    ..Default::default()
                };
                let doc_id = canonicalize(&reference).ok()?;
                let len = h.text.len();
                Some(Chunk {
                    doc_id,
                    span_id: h.span_id,
                    text: h.text,
                    char_offset: (0, len),
                    metadata: ChunkMetadata {
                        title: h.title,
                        year: h.year,
                        ..Default::default()
                    },
                })
            })
            .filter(|c| !c.text.trim().is_empty())
            .collect()
    }
}

impl SearchProvider for HttpSearch {
    fn name(&self) -> &str {
        "http"
    }

    fn search(&self, query: &str, k: usize) -> Result<Vec<Chunk>, SearchError> {
        let mut resp = self
            .agent
            .get(&self.base_url)
            .query("q", query)
            .query("k", k.to_string())
            .call()
            .map_err(|e| SearchError::Unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(SearchError::Unavailable(format!("HTTP {status}")));
        }
        let hits: Vec<HttpHit> = resp
            .body_mut()
            .read_json()
            .map_err(|e| SearchError::Malformed(e.to_string()))?;
        let mut chunks = Self::to_chunks(hits);
        chunks.truncate(k);
        Ok(chunks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn http_hits_become_chunks() {
        let hits: Vec<HttpHit> = serde_json::from_str(
            r#"[{"doi":"10.1/ABC","title":"T","text":"body","year":2020},
                {"url":"https://example.org/a?utm_source=x","title":"U","text":"more"},
                {"title":"no id","text":"dropped"}]"#,
        )
        .unwrap();
        let chunks = HttpSearch::to_chunks(hits);
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].doc_id.to_string(), "doi:10.1/abc");
        assert_eq!(chunks[1].doc_id.kind().as_str(), "urlhash");
    }
}
