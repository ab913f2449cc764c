//! Missing-List: paywalled documents waiting for a curator upload.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::citation::CanonicalId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingEntry {
    pub canonical: CanonicalId,
    pub title: String,
    pub tier: u8,
    pub first_seen: DateTime<Utc>,
}

/// Keyed by canonical id, so re-encountering a document never duplicates it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MissingList {
    entries: BTreeMap<CanonicalId, MissingEntry>,
}

impl MissingList {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false when the document was already listed.
    pub fn add(&mut self, canonical: &CanonicalId, title: &str, tier: u8, now: DateTime<Utc>) -> bool {
        if self.entries.contains_key(canonical) {
            return false;
        }
        self.entries.insert(
            canonical.clone(),
            MissingEntry {
                canonical: canonical.clone(),
                title: title.to_string(),
                tier,
                first_seen: now,
            },
        );
        true
    }

    pub fn remove(&mut self, canonical: &CanonicalId) -> Option<MissingEntry> {
        self.entries.remove(canonical)
    }

    pub fn contains(&self, canonical: &CanonicalId) -> bool {
        self.entries.contains_key(canonical)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &MissingEntry> {
        self.entries.values()
    }

    /// Newline-delimited `{canonical, title, tier, first_seen}` records.
    pub fn export(&self) -> String {
        self.entries
            .values()
            .map(|e| serde_json::to_string(e).expect("entries serialize") + "\n")
            .collect()
    }
}
