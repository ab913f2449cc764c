//! Tiered source adapters and document fetching.

use std::sync::Arc;

use super::corpus::SyntheticCorpus;
use super::matrix::KeywordTuple;
use super::{DocumentRecord, IngestError};
use crate::citation::CanonicalId;

/// One literature portal. Tier 1 is queried first.
pub trait SourceAdapter: Send + Sync {
    fn tier(&self) -> u8;
    fn name(&self) -> &str;
    fn search(&self, tuple: &KeywordTuple) -> Result<Vec<DocumentRecord>, IngestError>;
}

/// Resolves identifiers to records and retrieves full text.
pub trait DocumentFetcher: Send + Sync {
    fn resolve(&self, id: &CanonicalId) -> Option<DocumentRecord>;
    /// `None` when the full text is not accessible (paywalled).
    fn fetch_pdf(&self, record: &DocumentRecord) -> Option<Vec<u8>>;
}

/// Queries adapters in tier order and tags every candidate with the tier it
/// came from. A failing adapter is skipped with a warning; duplicates across
/// tiers are passed through for the dedup gate to decide.
pub fn crawl_tiers(
    tuple: &KeywordTuple,
    adapters: &[Arc<dyn SourceAdapter>],
) -> Result<Vec<DocumentRecord>, IngestError> {
    for tier in 1..=5u8 {
        if !adapters.iter().any(|a| a.tier() == tier) {
            return Err(IngestError::Config(format!("no source adapter for tier {tier}")));
        }
    }
    let mut ordered: Vec<&Arc<dyn SourceAdapter>> = adapters.iter().collect();
    ordered.sort_by_key(|a| a.tier());
    let mut out = Vec::new();
    let mut failures = 0;
    for adapter in &ordered {
        match adapter.search(tuple) {
            Ok(found) => out.extend(found.into_iter().map(|mut r| {
                r.tier = adapter.tier();
                r
            })),
            Err(e) => {
                failures += 1;
                tracing::warn!(adapter = adapter.name(), tier = adapter.tier(), error = %e, "source tier failed; skipping");
            }
        }
    }
    if failures == ordered.len() {
        return Err(IngestError::AllTiersFailed(tuple.query()));
    }
    Ok(out)
}

/// Serves one tier of a [`SyntheticCorpus`]: documents of that tier whose
/// keywords match the tuple and whose year falls in its window.
#[derive(Debug, Clone)]
pub struct TierAdapter {
    corpus: Arc<SyntheticCorpus>,
    tier: u8,
    name: String,
}

impl TierAdapter {
    pub fn new(corpus: Arc<SyntheticCorpus>, tier: u8) -> Self {
        Self {
            corpus,
            tier,
            name: format!("synthetic-tier-{tier}"),
        }
    }

    /// One adapter per tier, 1 to 5.
    pub fn all_tiers(corpus: Arc<SyntheticCorpus>) -> Vec<Arc<dyn SourceAdapter>> {
        (1..=5)
            .map(|t| Arc::new(Self::new(corpus.clone(), t)) as Arc<dyn SourceAdapter>)
            .collect()
    }
}

impl SourceAdapter for TierAdapter {
    fn tier(&self) -> u8 {
        self.tier
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn search(&self, tuple: &KeywordTuple) -> Result<Vec<DocumentRecord>, IngestError> {
        let matches = |a: &str, b: &str| a.trim().eq_ignore_ascii_case(b.trim());
        Ok(self
            .corpus
            .documents()
            .filter(|(_, _, d)| d.tier == self.tier)
            .filter(|(_, _, d)| {
                matches(&d.keywords.platform, &tuple.platform)
                    && matches(&d.keywords.device_class, &tuple.device_class)
                    && matches(&d.keywords.speed_marker, &tuple.speed_marker)
            })
            .filter_map(|(key, _, _)| self.corpus.record_for(key))
            .filter(|r| r.year().is_some_and(|y| tuple.in_window(y)))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Stub {
        tier: u8,
        n: usize,
        fail: bool,
    }

    impl SourceAdapter for Stub {
        fn tier(&self) -> u8 {
            self.tier
        }
        fn name(&self) -> &str {
            "stub"
        }
        fn search(&self, _: &KeywordTuple) -> Result<Vec<DocumentRecord>, IngestError> {
            if self.fail {
                return Err(IngestError::Source {
                    source_name: "stub".into(),
                    message: "down".into(),
                });
            }
            Ok((0..self.n)
                .map(|i| {
                    let id = CanonicalId::doi(&format!("10.2/t{}-{i}", self.tier)).unwrap();
                    DocumentRecord::new(id, "x", 0, "2020")
                })
                .collect())
        }
    }

    fn tuple() -> KeywordTuple {
        KeywordTuple {
            platform: "p".into(),
            device_class: "d".into(),
            speed_marker: "s".into(),
            window: (2018, None),
        }
    }

    fn adapters(counts: [usize; 5], failing: &[u8]) -> Vec<Arc<dyn SourceAdapter>> {
        // Deliberately out of tier order.
        (1..=5u8)
            .rev()
            .map(|t| {
                Arc::new(Stub {
                    tier: t,
                    n: counts[t as usize - 1],
                    fail: failing.contains(&t),
                }) as Arc<dyn SourceAdapter>
            })
            .collect()
    }

    #[test]
    fn concatenates_in_tier_order() {
        let out = crawl_tiers(&tuple(), &adapters([2, 1, 0, 3, 0], &[])).unwrap();
        assert_eq!(out.iter().map(|r| r.tier).collect::<Vec<_>>(), vec![1, 1, 2, 4, 4, 4]);
    }

    #[test]
    fn failing_tier_is_skipped() {
        let out = crawl_tiers(&tuple(), &adapters([2, 1, 0, 3, 0], &[2])).unwrap();
        assert_eq!(out.len(), 5);
        assert!(matches!(
            crawl_tiers(&tuple(), &adapters([1; 5], &[1, 2, 3, 4, 5])),
            Err(IngestError::AllTiersFailed(_))
        ));
    }
}
