//! Persistent stores: the metrics table and session logs.
//!
//! Both are small single-file stores written atomically (temp file, then
//! rename), which is all a desk-scale deployment needs.

mod metrics;
mod sessions;
mod title;

use std::io::Write;
use std::path::Path;

use thiserror::Error;

pub use metrics::{
    parse_pub_date, MetricField, MetricValues, MetricsRow, MetricsTable, Provenance, Sense, SharedMetrics, TrendPoint,
    METRICS_CSV_HEADER,
};
pub use sessions::{MessageEntry, MessageRole, SessionRecord, SessionStore, SessionSummary};
pub use title::{fallback_title, title_session};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("unknown or non-numeric field {0:?}")]
    UnknownField(String),
    #[error("injected fault: {0}")]
    Injected(String),
    #[error("serialization: {0}")]
    Serde(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Writes `bytes` to `path` via a sibling temp file and a rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension(format!("tmp-{}", uuid::Uuid::new_v4().simple()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}
