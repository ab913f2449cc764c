//! Dedup gate over content hash and identity.
//!
//! A candidate is a duplicate when either its PDF hash or its identifier is
//! already known, so a preprint and its published version collapse to one.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::citation::{CanonicalId, IdKind};
use crate::store::StoreError;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DedupKey {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha1: Option<String>,
    /// Normalized DOI; documents without one use their rendered canonical id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doi: Option<String>,
}

impl DedupKey {
    pub fn new(sha1: Option<String>, id: &CanonicalId) -> Self {
        let doi = match id.kind() {
            IdKind::Doi => id.value().to_string(),
            _ => id.to_string(),
        };
        Self {
            sha1: sha1.map(|s| s.to_ascii_lowercase()),
            doi: Some(doi),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.sha1.is_some() || self.doi.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DedupDecision {
    Accept,
    Duplicate,
}

#[derive(Debug, Default, Clone, PartialEq)]
struct Tables {
    records: BTreeSet<DedupKey>,
    sha1s: BTreeSet<String>,
    dois: BTreeSet<String>,
}

/// Linearizable check-and-insert store.
#[derive(Debug, Default)]
pub struct DedupStore {
    inner: Mutex<Tables>,
}

impl Clone for DedupStore {
    fn clone(&self) -> Self {
        Self {
            inner: Mutex::new(self.lock().clone()),
        }
    }
}

impl PartialEq for DedupStore {
    fn eq(&self, other: &Self) -> bool {
        *self.lock() == *other.lock()
    }
}

impl DedupStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Tables> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn len(&self) -> usize {
        self.lock().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, key: &DedupKey) -> bool {
        let t = self.lock();
        key.sha1.as_ref().is_some_and(|s| t.sha1s.contains(s)) || key.doi.as_ref().is_some_and(|d| t.dois.contains(d))
    }

    pub fn knows_id(&self, id: &CanonicalId) -> bool {
        let key = DedupKey::new(None, id);
        self.contains(&key)
    }

    /// Duplicate when either component is already stored; otherwise records
    /// the key and accepts.
    pub fn dedup_gate(&self, key: &DedupKey) -> Result<DedupDecision, IngestError> {
        if !key.is_valid() {
            return Err(IngestError::Config("dedup key needs a hash or an identifier".into()));
        }
        let mut t = self.lock();
        let dup = key.sha1.as_ref().is_some_and(|s| t.sha1s.contains(s))
            || key.doi.as_ref().is_some_and(|d| t.dois.contains(d));
        if dup {
            return Ok(DedupDecision::Duplicate);
        }
        Self::insert_locked(&mut t, key.clone());
        Ok(DedupDecision::Accept)
    }

    /// Adds whatever components of `key` are new (used when an upload
    /// supplies the hash of a document first seen without one).
    pub fn record(&self, key: &DedupKey) {
        let mut t = self.lock();
        Self::insert_locked(&mut t, key.clone());
    }

    fn insert_locked(t: &mut Tables, key: DedupKey) {
        if let Some(s) = &key.sha1 {
            t.sha1s.insert(s.clone());
        }
        if let Some(d) = &key.doi {
            t.dois.insert(d.clone());
        }
        t.records.insert(key);
    }

    pub fn keys(&self) -> Vec<DedupKey> {
        self.lock().records.iter().cloned().collect()
    }

    /// Sorted newline-delimited `{sha1?, doi?}` records.
    pub fn export(&self) -> String {
        self.lock()
            .records
            .iter()
            .map(|k| serde_json::to_string(k).expect("keys serialize") + "\n")
            .collect()
    }

    pub fn from_keys(keys: impl IntoIterator<Item = DedupKey>) -> Self {
        let store = Self::new();
        {
            let mut t = store.lock();
            for k in keys {
                Self::insert_locked(&mut t, k);
            }
        }
        store
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        crate::store::write_atomic(path, self.export().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::new()),
            Err(e) => return Err(e.into()),
        };
        let keys = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| StoreError::Serde(e.to_string())))
            .collect::<Result<Vec<DedupKey>, _>>()?;
        Ok(Self::from_keys(keys))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(sha: Option<&str>, doi: &str) -> DedupKey {
        DedupKey::new(sha.map(str::to_string), &CanonicalId::doi(doi).unwrap())
    }

    #[test]
    fn either_component_matches() {
        let s = DedupStore::new();
        let a = key(Some("aa"), "10.1/x");
        assert_eq!(s.dedup_gate(&a).unwrap(), DedupDecision::Accept);
        assert_eq!(s.len(), 1);
        assert_eq!(s.dedup_gate(&a).unwrap(), DedupDecision::Duplicate);
        assert_eq!(
            s.dedup_gate(&key(Some("bb"), "10.1/x")).unwrap(),
            DedupDecision::Duplicate
        );
        assert_eq!(
            s.dedup_gate(&key(Some("aa"), "10.1/y")).unwrap(),
            DedupDecision::Duplicate
        );
        assert_eq!(s.dedup_gate(&key(Some("cc"), "10.1/z")).unwrap(), DedupDecision::Accept);
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = DedupStore::new();
        s.dedup_gate(&key(Some("bb"), "10.1/b")).unwrap();
        s.dedup_gate(&key(None, "10.1/a")).unwrap();
        let text = s.export();
        assert!(text.lines().next().unwrap().contains("10.1/a"));
        let p = dir.path().join("dedup.jsonl");
        s.save(&p).unwrap();
        assert_eq!(DedupStore::load(&p).unwrap(), s);
    }
}
