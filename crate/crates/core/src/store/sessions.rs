//! Session records: one JSON document per session.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::{write_atomic, StoreError};
use crate::gateway::{CompletionUsage, MAX_TITLE_WORDS, MIN_TITLE_WORDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    User,
    Assistant,
    System,
}

/// One logged message. Serializes to exactly
/// `{role, content, timestamp, usage}`; `usage` is `null` when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageEntry {
    pub role: MessageRole,
    pub content: String,
    pub timestamp: DateTime<Utc>,
    pub usage: Option<CompletionUsage>,
}

impl MessageEntry {
    pub fn new(role: MessageRole, content: impl Into<String>, timestamp: DateTime<Utc>) -> Self {
        Self {
            role,
            content: content.into(),
            timestamp,
            usage: None,
        }
    }

    pub fn with_usage(mut self, usage: CompletionUsage) -> Self {
        self.usage = Some(usage);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRecord {
    pub session_id: Uuid,
    pub title: String,
    pub created_at: DateTime<Utc>,
    pub messages: Vec<MessageEntry>,
}

impl SessionRecord {
    pub fn validate(&self) -> Result<(), StoreError> {
        let words = self.title.split_whitespace().count();
        if !(MIN_TITLE_WORDS..=MAX_TITLE_WORDS).contains(&words) {
            return Err(StoreError::Validation(format!(
                "title {:?} has {words} words, expected 3-6",
                self.title
            )));
        }
        if self.messages.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
            return Err(StoreError::Validation("message timestamps decrease".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: Uuid,
    pub title: String,
    pub created_at: DateTime<Utc>,
    pub message_count: usize,
}

/// Directory of `<uuid>.json` files. Writes to one session are serialized;
/// different sessions never contend.
#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    locks: Mutex<HashMap<Uuid, Arc<Mutex<()>>>>,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: Uuid) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn lock_for(&self, id: Uuid) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .entry(id)
            .or_default()
            .clone()
    }

    /// Validates and writes the record; a later write replaces it whole.
    pub fn persist_session(&self, record: &SessionRecord) -> Result<(), StoreError> {
        record.validate()?;
        let bytes = serde_json::to_vec_pretty(record).map_err(|e| StoreError::Serde(e.to_string()))?;
        let lock = self.lock_for(record.session_id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        write_atomic(&self.path(record.session_id), &bytes)
    }

    pub fn load_session(&self, id: Uuid) -> Result<SessionRecord, StoreError> {
        let path = self.path(id);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(format!("session {id}")))
            }
            Err(e) => return Err(e.into()),
        };
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Serde(format!("{}: {e}", path.display())))
    }

    pub fn exists(&self, id: Uuid) -> bool {
        self.path(id).exists()
    }

    /// All sessions, oldest first.
    pub fn list(&self) -> Result<Vec<SessionSummary>, StoreError> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let path = entry?.path();
            let Some(id) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_suffix(".json"))
                .and_then(|n| Uuid::parse_str(n).ok())
            else {
                continue;
            };
            let r = self.load_session(id)?;
            out.push(SessionSummary {
                session_id: r.session_id,
                title: r.title,
                created_at: r.created_at,
                message_count: r.messages.len(),
            });
        }
        out.sort_by_key(|s| (s.created_at, s.session_id));
        Ok(out)
    }
}
