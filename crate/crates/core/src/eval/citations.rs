//! Citation alignment against gold sources, and coverage/novelty overlap.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::retrieval::{cosine, Embedder};

/// Basename without directories or a `.pdf` extension, case-folded.
pub fn normalize_gold_source(path_or_name: &str) -> String {
    let base = path_or_name.trim().rsplit(['/', '\\']).next().unwrap_or_default();
    let lower = base.to_lowercase();
    lower.strip_suffix(".pdf").unwrap_or(&lower).trim().to_string()
}

fn normalize_title(s: &str) -> String {
    normalize_gold_source(s)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Decides whether a predicted source and a gold source are the same work.
pub trait SourceMatcher: Send + Sync {
    fn matches(&self, predicted: &str, gold: &str) -> bool;
}

/// Normalized-title equality, or embedding cosine at or above `threshold`
/// when an embedder is configured.
#[derive(Clone)]
pub struct TitleMatcher {
    pub embedder: Option<Arc<dyn Embedder>>,
    pub threshold: f64,
}

impl std::fmt::Debug for TitleMatcher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TitleMatcher")
            .field("semantic", &self.embedder.is_some())
            .field("threshold", &self.threshold)
            .finish()
    }
}

pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.8;

impl TitleMatcher {
    pub fn exact() -> Self {
        Self {
            embedder: None,
            threshold: DEFAULT_MATCH_THRESHOLD,
        }
    }

    pub fn semantic(embedder: Arc<dyn Embedder>) -> Self {
        Self {
            embedder: Some(embedder),
            threshold: DEFAULT_MATCH_THRESHOLD,
        }
    }
}

impl SourceMatcher for TitleMatcher {
    fn matches(&self, predicted: &str, gold: &str) -> bool {
        let (a, b) = (normalize_title(predicted), normalize_title(gold));
        if a == b {
            return true;
        }
        match &self.embedder {
            Some(e) => match (e.embed(&a), e.embed(&b)) {
                (Ok(va), Ok(vb)) => cosine(&va, &vb) >= self.threshold,
                _ => false,
            },
            None => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CitationPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Size of the maximum matching.
    pub matched: usize,
    /// `matched / |predicted|` (0 when nothing was predicted).
    pub matched_rate: f64,
    pub predicted: usize,
    pub gold: usize,
}

/// Kuhn's augmenting-path matching; returns the maximum matching size.
fn max_matching(adj: &[Vec<usize>], n_right: usize) -> usize {
    fn augment(u: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].is_none_or(|w| augment(w, adj, seen, owner)) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; n_right];
    (0..adj.len())
        .filter(|&u| {
            let mut seen = vec![false; n_right];
            augment(u, adj, &mut seen, &mut owner)
        })
        .count()
}

/// Precision, recall and F1 under a maximum one-to-one matching. An empty
/// prediction has precision 1; an empty gold list has recall 1.
pub fn citation_prf(predicted: &[String], gold: &[String], matcher: &dyn SourceMatcher) -> CitationPrf {
    let adj: Vec<Vec<usize>> = predicted
        .iter()
        .map(|p| (0..gold.len()).filter(|&j| matcher.matches(p, &gold[j])).collect())
        .collect();
    let matched = max_matching(&adj, gold.len());
    let precision = if predicted.is_empty() {
        1.0
    } else {
        matched as f64 / predicted.len() as f64
    };
    let recall = if gold.is_empty() {
        1.0
    } else {
        matched as f64 / gold.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    CitationPrf {
        precision,
        recall,
        f1,
        matched,
        matched_rate: if predicted.is_empty() {
            0.0
        } else {
            matched as f64 / predicted.len() as f64
        },
        predicted: predicted.len(),
        gold: gold.len(),
    }
}

/// `(1 − recall, 1 − precision)` of a system's items against a baseline's.
pub fn coverage_novelty(system: &BTreeSet<String>, baseline: &BTreeSet<String>) -> Result<(f64, f64), EvalError> {
    if baseline.is_empty() {
        return Err(EvalError::Undefined("coverage gap needs a non-empty baseline".into()));
    }
    if system.is_empty() {
        return Err(EvalError::Undefined("novelty rate needs a non-empty system set".into()));
    }
    let common = system.intersection(baseline).count() as f64;
    Ok((1.0 - common / baseline.len() as f64, 1.0 - common / system.len() as f64))
}
