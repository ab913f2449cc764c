//! Breadth-first citation snowballing until saturation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::dedup::DedupStore;
use crate::citation::CanonicalId;

/// A wave saturates when more than this fraction of the identifiers it
/// encounters are already known.
pub const SATURATION_FRACTION: f64 = 0.9;

/// Backward references and forward cited-by lookups.
pub trait CitationGraph: Send + Sync {
    fn references(&self, id: &CanonicalId) -> Vec<CanonicalId>;
    fn cited_by(&self, id: &CanonicalId) -> Vec<CanonicalId>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveStats {
    pub wave: usize,
    pub encountered: usize,
    pub already_known: usize,
    pub fraction_known: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnowballResult {
    /// Newly discovered identifiers, in discovery order.
    pub discovered: Vec<CanonicalId>,
    pub waves: Vec<WaveStats>,
    pub saturated: bool,
}

/// Expands `seeds` wave by wave along references and cited-by edges.
///
/// In each wave the distinct neighbors of the frontier are collected; the
/// fraction of them already known (in `seen` or visited earlier in this
/// expansion) is recorded. Unknown neighbors are discovered. Expansion stops
/// once a wave's fraction exceeds [`SATURATION_FRACTION`] (its discoveries
/// are kept but not expanded) or the frontier is empty. Every node is
/// visited at most once, so the walk terminates on cyclic graphs.
pub fn snowball(seeds: &[CanonicalId], graph: &dyn CitationGraph, seen: &DedupStore) -> SnowballResult {
    let mut visited: BTreeSet<CanonicalId> = seeds.iter().cloned().collect();
    let mut frontier: Vec<CanonicalId> = visited.iter().cloned().collect();
    let mut discovered = Vec::new();
    let mut waves = Vec::new();
    let mut saturated = false;

    while !frontier.is_empty() {
        let mut neighbors = BTreeSet::new();
        for id in &frontier {
            neighbors.extend(graph.references(id));
            neighbors.extend(graph.cited_by(id));
        }
        if neighbors.is_empty() {
            break;
        }
        let mut known = 0;
        let mut next = Vec::new();
        for n in &neighbors {
            if visited.contains(n) || seen.knows_id(n) {
                known += 1;
            } else {
                next.push(n.clone());
            }
        }
        let fraction = known as f64 / neighbors.len() as f64;
        waves.push(WaveStats {
            wave: waves.len() + 1,
            encountered: neighbors.len(),
            already_known: known,
            fraction_known: fraction,
        });
        for n in &next {
            visited.insert(n.clone());
            discovered.push(n.clone());
        }
        if fraction > SATURATION_FRACTION {
            saturated = true;
            break;
        }
        frontier = next;
    }
    SnowballResult {
        discovered,
        waves,
        saturated,
    }
}
