//! Inline citation markers: `[[cite: <kind>:<value> # <span_id>]]`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{CanonicalId, CitationError};

pub const MARKER_OPEN: &str = "[[cite:";
pub const MARKER_CLOSE: &str = "]]";

/// One marker occurrence in a text, with its byte range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationMarker {
    pub doc_id: CanonicalId,
    pub span_id: u32,
    pub range: Range<usize>,
}

impl CitationMarker {
    pub fn key(&self) -> (&CanonicalId, u32) {
        (&self.doc_id, self.span_id)
    }
}

pub fn render_marker(doc_id: &CanonicalId, span_id: u32) -> String {
    format!("{MARKER_OPEN} {doc_id} # {span_id}{MARKER_CLOSE}")
}

/// Finds every marker in `text`, in order of appearance.
pub fn find_markers(text: &str) -> Result<Vec<CitationMarker>, CitationError> {
    let mut out = Vec::new();
    let mut cursor = 0;
    while let Some(rel) = text[cursor..].find(MARKER_OPEN) {
        let start = cursor + rel;
        let body_start = start + MARKER_OPEN.len();
        let close_rel = text[body_start..]
            .find(MARKER_CLOSE)
            .ok_or(CitationError::MalformedMarker {
                position: start,
                reason: "unterminated marker".into(),
            })?;
        let body = &text[body_start..body_start + close_rel];
        if body.contains(MARKER_OPEN) || body.contains('\n') {
            return Err(CitationError::MalformedMarker {
                position: start,
                reason: "unterminated marker".into(),
            });
        }
        let end = body_start + close_rel + MARKER_CLOSE.len();
        let (id_part, span_part) = body.rsplit_once('#').ok_or(CitationError::MalformedMarker {
            position: start,
            reason: "missing '#' before span id".into(),
        })?;
        let span_id: u32 = span_part.trim().parse().map_err(|_| CitationError::MalformedMarker {
            position: start,
            reason: format!("span id {:?} is not a non-negative integer", span_part.trim()),
        })?;
        let doc_id = CanonicalId::parse(id_part).map_err(|e| CitationError::MalformedMarker {
            position: start,
            reason: e.to_string(),
        })?;
        out.push(CitationMarker {
            doc_id,
            span_id,
            range: start..end,
        });
        cursor = end;
    }
    Ok(out)
}

/// Removes the given byte ranges (sorted, non-overlapping) from `text`,
/// together with any horizontal whitespace immediately before each range.
pub(crate) fn strip_ranges(text: &str, ranges: &[Range<usize>]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for r in ranges {
        let kept = &text[cursor..r.start];
        out.push_str(kept.trim_end_matches([' ', '\t']));
        cursor = r.end;
    }
    out.push_str(&text[cursor..]);
    out
}
