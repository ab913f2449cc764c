use serde::{Deserialize, Serialize};

use crate::citation::CanonicalId;

/// Window length and overlap used when chunking ingested text, in characters.
pub const CHUNK_WINDOW_CHARS: usize = 1000;
pub const CHUNK_OVERLAP_CHARS: usize = 200;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkMetadata {
    pub title: String,
    #[serde(default)]
    pub authors: Vec<String>,
    #[serde(default)]
    pub year: Option<i32>,
    #[serde(default)]
    pub venue: Option<String>,
    #[serde(default)]
    pub tier: Option<u8>,
}

/// A span of a source document. `char_offset` is a byte range into the
/// source text, always on character boundaries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: CanonicalId,
    pub span_id: u32,
    pub text: String,
    pub char_offset: (usize, usize),
    pub metadata: ChunkMetadata,
}

impl Chunk {
    pub fn key(&self) -> ChunkKey {
        ChunkKey {
            doc_id: self.doc_id.clone(),
            span_id: self.span_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChunkKey {
    pub doc_id: CanonicalId,
    pub span_id: u32,
}

/// A retrieved chunk together with its cosine similarity to the query that
/// retrieved it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub chunk: Chunk,
    pub similarity: f64,
    pub retrieved_at_iteration: u32,
}

impl EvidenceItem {
    pub fn doc_id(&self) -> &CanonicalId {
        &self.chunk.doc_id
    }

    pub fn span_id(&self) -> u32 {
        self.chunk.span_id
    }

    pub fn key(&self) -> ChunkKey {
        self.chunk.key()
    }
}

/// Ranking order for evidence: similarity descending, then `(doc_id, span_id)`
/// ascending.
pub fn rank_order(a: &EvidenceItem, b: &EvidenceItem) -> std::cmp::Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then_with(|| a.chunk.doc_id.cmp(&b.chunk.doc_id))
        .then_with(|| a.chunk.span_id.cmp(&b.chunk.span_id))
}

/// Mean similarity of a result set; the empty set has mean 0.
pub fn mean_similarity(items: &[EvidenceItem]) -> f64 {
    if items.is_empty() {
        0.0
    } else {
        items.iter().map(|e| e.similarity).sum::<f64>() / items.len() as f64
    }
}

/// Splits `text` into overlapping character windows. Span ids start at
/// `first_span_id` and increase by one per window.
pub fn chunk_text(doc_id: &CanonicalId, text: &str, metadata: &ChunkMetadata, first_span_id: u32) -> Vec<Chunk> {
    chunk_text_with(
        doc_id,
        text,
        metadata,
        first_span_id,
        CHUNK_WINDOW_CHARS,
        CHUNK_OVERLAP_CHARS,
    )
}

pub fn chunk_text_with(
    doc_id: &CanonicalId,
    text: &str,
    metadata: &ChunkMetadata,
    first_span_id: u32,
    window: usize,
    overlap: usize,
) -> Vec<Chunk> {
    assert!(window > overlap, "chunk window must exceed overlap");
    let boundaries: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let n_chars = boundaries.len() - 1;
    let mut chunks = Vec::new();
    let mut start = 0;
    let mut span_id = first_span_id;
    while start < n_chars {
        let end = (start + window).min(n_chars);
        let (b0, b1) = (boundaries[start], boundaries[end]);
        let piece = &text[b0..b1];
        if !piece.trim().is_empty() {
            chunks.push(Chunk {
                doc_id: doc_id.clone(),
                span_id,
                text: piece.to_string(),
                char_offset: (b0, b1),
                metadata: metadata.clone(),
            });
            span_id += 1;
        }
        if end == n_chars {
            break;
        }
        start = end - overlap;
    }
    chunks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_overlap_and_stay_in_bounds() {
        let id = CanonicalId::doi("10.1/x").unwrap();
        let text: String = (0..2500).map(|i| char::from(b'a' + (i % 26) as u8)).collect();
        let chunks = chunk_text(&id, &text, &ChunkMetadata::default(), 0);
        let spans: Vec<_> = chunks.iter().map(|c| c.char_offset).collect();
        assert_eq!(spans, vec![(0, 1000), (800, 1800), (1600, 2500)]);
        assert_eq!(chunks[2].span_id, 2);
        for c in &chunks {
            assert_eq!(&text[c.char_offset.0..c.char_offset.1], c.text);
        }
    }

    #[test]
    fn multibyte_text_chunks_on_char_boundaries() {
        let id = CanonicalId::doi("10.1/x").unwrap();
        let text = "Vπ·L ".repeat(300);
        let chunks = chunk_text(&id, &text, &ChunkMetadata::default(), 5);
        assert_eq!(chunks[0].span_id, 5);
        for c in &chunks {
            assert!(c.char_offset.1 <= text.len());
            assert_eq!(c.text.chars().count().min(1000), c.text.chars().count());
        }
    }

    #[test]
    fn short_text_is_one_chunk() {
        let id = CanonicalId::doi("10.1/x").unwrap();
        let chunks = chunk_text(&id, "short abstract", &ChunkMetadata::default(), 0);
        assert_eq!(chunks.len(), 1);
        assert!(chunk_text(&id, "", &ChunkMetadata::default(), 0).is_empty());
    }
}
