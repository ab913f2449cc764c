//! Text embedding.

use serde::{Deserialize, Serialize};

use super::RetrievalError;

/// Default dimension of the offline hashing embedder.
pub const HASH_EMBEDDER_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Wraps raw values. Fails on an empty, non-finite or all-zero vector.
    pub fn new(values: Vec<f64>) -> Result<Self, RetrievalError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::Embedding("vector has no finite components".into()));
        }
        let v = Self(values);
        if v.norm() == 0.0 {
            return Err(RetrievalError::Embedding("zero-norm vector".into()));
        }
        Ok(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self(self.0.iter().map(|v| v / n).collect())
    }
}

/// Cosine similarity. Both vectors must share a dimension.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    debug_assert_eq!(a.dimension(), b.dimension());
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.0.iter().zip(&b.0) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError>;
}

/// Deterministic feature-hashing embedder over lowercase word unigrams and
/// bigrams, unit-normalized. Texts without word tokens fall back to
/// character trigrams.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
    seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(HASH_EMBEDDER_DIM, 0x5eed)
    }
}

impl HashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0);
        Self { dimension, seed }
    }

    fn bucket(&self, feature: &str) -> (usize, f64) {
        // FNV-1a, seeded through the offset basis
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        for b in feature.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        let idx = (h % self.dimension as u64) as usize;
        let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
        (idx, sign)
    }
}

pub(crate) fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl Embedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        if text.trim().is_empty() {
            return Err(RetrievalError::EmptyText);
        }
        let mut values = vec![0.0; self.dimension];
        let tokens = tokenize(text);
        if tokens.is_empty() {
            let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
            for w in chars.windows(3.min(chars.len())) {
                let (i, s) = self.bucket(&w.iter().collect::<String>());
                values[i] += s;
            }
        } else {
            for t in &tokens {
                let (i, s) = self.bucket(t);
                values[i] += s;
            }
            for pair in tokens.windows(2) {
                let (i, s) = self.bucket(&format!("{} {}", pair[0], pair[1]));
                values[i] += 0.5 * s;
            }
        }
        if values.iter().all(|v| *v == 0.0) {
            // colliding features cancelled out; pin a deterministic direction
            values[self.bucket(text).0] = 1.0;
        }
        Ok(EmbeddingVector::new(values)?.normalized())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_unit_norm() {
        let e = HashEmbedder::default();
        let a = e.embed("What limits 3-dB bandwidth?").unwrap();
        let b = e.embed("What limits 3-dB bandwidth?").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dimension(), 256);
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert!((cosine(&a, &a) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn related_texts_are_closer_than_unrelated() {
        let e = HashEmbedder::default();
        let q = e.embed("thin film lithium niobate modulator bandwidth").unwrap();
        let near = e
            .embed("lithium niobate thin film modulator with high bandwidth")
            .unwrap();
        let far = e.embed("annual rainfall statistics in coastal cities").unwrap();
        assert!(cosine(&q, &near) > cosine(&q, &far));
    }

    #[test]
    fn punctuation_only_text_still_embeds() {
        let e = HashEmbedder::default();
        let v = e.embed("·–·").unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-9);
        assert!(matches!(e.embed("   "), Err(RetrievalError::EmptyText)));
    }

    #[test]
    fn zero_vectors_are_rejected() {
        assert!(EmbeddingVector::new(vec![0.0, 0.0]).is_err());
        assert!(EmbeddingVector::new(vec![]).is_err());
        assert!(EmbeddingVector::new(vec![f64::NAN]).is_err());
    }
}
