//! Closed-world citations.
//!
//! A final answer may cite only `(doc_id, span_id)` pairs present in the
//! session's evidence pool. Drafts cite with inline markers; markers that
//! resolve outside the pool are rejected and stripped, every surviving claim
//! is mapped to its supporting spans, and fidelity metrics are computed on
//! both the draft and the final text.

mod canonical;
mod claims;
mod marker;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retrieval::{rank_order, ChunkKey, EvidenceItem};

pub(crate) use canonical::sha1_hex;
pub use canonical::{canonicalize, CanonicalId, IdKind, RawReference};
pub use claims::{extract_claims, split_claims, Claim, Segmentation};
pub use marker::{find_markers, render_marker, CitationMarker, MARKER_CLOSE, MARKER_OPEN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CitationError {
    #[error("source has no DOI, ISBN or URL: {title:?}")]
    Uncitable { title: String },
    #[error("invalid identifier {0:?}")]
    InvalidIdentifier(String),
    #[error("malformed citation marker at byte {position}: {reason}")]
    MalformedMarker { position: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportRef {
    pub doc_id: CanonicalId,
    pub span_id: u32,
    pub offsets: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimEvidenceRow {
    pub claim_id: usize,
    pub supports: Vec<SupportRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedCitation {
    pub doc_id: CanonicalId,
    pub span_id: u32,
    /// Byte position of the marker in the draft.
    pub position: usize,
}

/// Output of aligning a draft's markers against the evidence pool.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Alignment {
    pub claims: Vec<Claim>,
    /// One row per claim with at least one in-evidence support.
    pub rows: Vec<ClaimEvidenceRow>,
    pub rejected: Vec<RejectedCitation>,
    pub markers: Vec<CitationMarker>,
    /// Parallel to `markers`: whether the marker resolved into evidence.
    pub accepted: Vec<bool>,
}

impl Alignment {
    pub fn aligned_count(&self) -> usize {
        self.rows.iter().map(|r| r.supports.len()).sum()
    }
}

fn evidence_map(evidence: &[EvidenceItem]) -> HashMap<ChunkKey, &EvidenceItem> {
    evidence.iter().map(|e| (e.key(), e)).collect()
}

/// Resolves every marker in `draft` against `evidence`.
pub fn align_citations(draft: &str, evidence: &[EvidenceItem]) -> Result<Alignment, CitationError> {
    let markers = find_markers(draft)?;
    let pool = evidence_map(evidence);
    let seg = split_claims(draft, &markers);

    let mut per_claim: BTreeMap<usize, Vec<SupportRef>> = BTreeMap::new();
    let mut rejected = Vec::new();
    let mut accepted = Vec::with_capacity(markers.len());
    for (i, m) in markers.iter().enumerate() {
        let key = ChunkKey {
            doc_id: m.doc_id.clone(),
            span_id: m.span_id,
        };
        match pool.get(&key) {
            Some(ev) => {
                accepted.push(true);
                if let Some(ci) = seg.attachments[i] {
                    let supports = per_claim.entry(ci).or_default();
                    if !supports.iter().any(|s| s.doc_id == m.doc_id && s.span_id == m.span_id) {
                        supports.push(SupportRef {
                            doc_id: m.doc_id.clone(),
                            span_id: m.span_id,
                            offsets: ev.chunk.char_offset,
                        });
                    }
                }
            }
            None => {
                accepted.push(false);
                rejected.push(RejectedCitation {
                    doc_id: m.doc_id.clone(),
                    span_id: m.span_id,
                    position: m.range.start,
                });
            }
        }
    }
    let rows = per_claim
        .into_iter()
        .map(|(ci, supports)| ClaimEvidenceRow {
            claim_id: seg.claims[ci].claim_id,
            supports,
        })
        .collect();
    Ok(Alignment {
        claims: seg.claims,
        rows,
        rejected,
        markers,
        accepted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub fabricated_rate: f64,
    pub fabricated: usize,
    pub citations: usize,
    pub title_match_rate: f64,
    pub titles_matched: usize,
    pub titles_checked: usize,
    pub claim_coverage: f64,
    pub supported_claims: usize,
    pub total_claims: usize,
    /// Set when there were no claims and coverage is 1.0 by convention.
    pub vacuous_coverage: bool,
}

/// Case-folded, punctuation-stripped, whitespace-collapsed title.
pub fn normalize_title(title: &str) -> String {
    title
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Fidelity metrics over an alignment.
///
/// `rendered_titles` maps cited documents to the title the answer displays
/// for them; citations without a rendered title are not title-checked.
pub fn compute_fidelity(
    rows: &[ClaimEvidenceRow],
    rejected: &[RejectedCitation],
    claims: &[Claim],
    evidence: &[EvidenceItem],
    rendered_titles: &BTreeMap<CanonicalId, String>,
) -> FidelityReport {
    let aligned: usize = rows.iter().map(|r| r.supports.len()).sum();
    let fabricated = rejected.len();
    let citations = aligned + fabricated;
    let fabricated_rate = ratio(fabricated, citations, 0.0);

    let evidence_titles: HashMap<&CanonicalId, &str> = evidence
        .iter()
        .map(|e| (&e.chunk.doc_id, e.chunk.metadata.title.as_str()))
        .collect();
    let cited_docs: BTreeSet<&CanonicalId> = rows.iter().flat_map(|r| r.supports.iter().map(|s| &s.doc_id)).collect();
    let mut checked = 0;
    let mut matched = 0;
    for doc in cited_docs {
        if let Some(shown) = rendered_titles.get(doc) {
            checked += 1;
            if evidence_titles
                .get(doc)
                .is_some_and(|t| normalize_title(t) == normalize_title(shown))
            {
                matched += 1;
            }
        }
    }

    let supported_ids: BTreeSet<usize> = rows
        .iter()
        .filter(|r| !r.supports.is_empty())
        .map(|r| r.claim_id)
        .collect();
    let supported = claims.iter().filter(|c| supported_ids.contains(&c.claim_id)).count();
    FidelityReport {
        fabricated_rate,
        fabricated,
        citations,
        title_match_rate: ratio(matched, checked, 1.0),
        titles_matched: matched,
        titles_checked: checked,
        claim_coverage: ratio(supported, claims.len(), 1.0),
        supported_claims: supported,
        total_claims: claims.len(),
        vacuous_coverage: claims.is_empty(),
    }
}

fn ratio(num: usize, den: usize, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

/// Thresholds a final answer must meet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FidelityPolicy {
    /// Minimum fraction of claims with at least one support. Independently
    /// of this value, an answer with claims but no supported claim fails.
    pub min_claim_coverage: f64,
    pub min_title_match: f64,
}

impl Default for FidelityPolicy {
    fn default() -> Self {
        Self {
            min_claim_coverage: 0.0,
            min_title_match: 1.0,
        }
    }
}

impl FidelityPolicy {
    pub fn passes(&self, report: &FidelityReport) -> bool {
        report.fabricated == 0
            && report.title_match_rate >= self.min_title_match
            && report.claim_coverage >= self.min_claim_coverage
            && (report.total_claims == 0 || report.supported_claims > 0)
    }
}

/// One reference of a final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitedEvidence {
    pub doc_id: CanonicalId,
    pub span_id: u32,
    pub title: String,
    pub similarity: f64,
    pub offsets: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalAnswer {
    pub text: String,
    pub citations: Vec<CitedEvidence>,
    pub claims: Vec<Claim>,
    pub table: Vec<ClaimEvidenceRow>,
    pub rejected: Vec<RejectedCitation>,
    /// Metrics of the incoming draft.
    pub draft_report: FidelityReport,
    /// Metrics of the emitted text.
    pub report: FidelityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum AbstainReason {
    MalformedDraft { position: usize, detail: String },
    FidelityCheckFailed { report: FidelityReport },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClosedWorldOutcome {
    Final(FinalAnswer),
    Abstain(AbstainReason),
}

/// Strips out-of-evidence citations from a draft and checks the result.
///
/// This is a single pass; the controller decides whether to re-draft once
/// before abstaining.
pub fn enforce_closed_world(draft: &str, evidence: &[EvidenceItem], policy: &FidelityPolicy) -> ClosedWorldOutcome {
    let alignment = match align_citations(draft, evidence) {
        Ok(a) => a,
        Err(CitationError::MalformedMarker { position, reason }) => {
            return ClosedWorldOutcome::Abstain(AbstainReason::MalformedDraft {
                position,
                detail: reason,
            })
        }
        Err(e) => {
            return ClosedWorldOutcome::Abstain(AbstainReason::MalformedDraft {
                position: 0,
                detail: e.to_string(),
            })
        }
    };
    let no_titles = BTreeMap::new();
    let draft_report = compute_fidelity(
        &alignment.rows,
        &alignment.rejected,
        &alignment.claims,
        evidence,
        &no_titles,
    );

    let drop: Vec<_> = alignment
        .markers
        .iter()
        .zip(&alignment.accepted)
        .filter(|(_, ok)| !**ok)
        .map(|(m, _)| m.range.clone())
        .collect();
    let text = marker::strip_ranges(draft, &drop);

    // Re-align the emitted text; it is the object the guarantees are about.
    let final_alignment = align_citations(&text, evidence).expect("stripping markers keeps the rest well-formed");
    let pool = evidence_map(evidence);
    let mut keys: Vec<ChunkKey> = final_alignment
        .markers
        .iter()
        .map(|m| ChunkKey {
            doc_id: m.doc_id.clone(),
            span_id: m.span_id,
        })
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    keys.retain(|k| pool.contains_key(k));
    let mut cited: Vec<EvidenceItem> = keys.iter().map(|k| (*pool[k]).clone()).collect();
    cited.sort_by(rank_order);
    let citations: Vec<CitedEvidence> = cited
        .iter()
        .map(|e| CitedEvidence {
            doc_id: e.chunk.doc_id.clone(),
            span_id: e.chunk.span_id,
            title: e.chunk.metadata.title.clone(),
            similarity: e.similarity,
            offsets: e.chunk.char_offset,
        })
        .collect();
    let rendered: BTreeMap<CanonicalId, String> =
        citations.iter().map(|c| (c.doc_id.clone(), c.title.clone())).collect();
    let report = compute_fidelity(
        &final_alignment.rows,
        &final_alignment.rejected,
        &final_alignment.claims,
        evidence,
        &rendered,
    );
    if !policy.passes(&report) {
        return ClosedWorldOutcome::Abstain(AbstainReason::FidelityCheckFailed { report });
    }
    ClosedWorldOutcome::Final(FinalAnswer {
        text,
        citations,
        claims: final_alignment.claims,
        table: final_alignment.rows,
        rejected: alignment.rejected,
        draft_report,
        report,
    })
}

/// Keeps the `limit` best-ranked citations (similarity descending, ties by
/// `(doc_id, span_id)`).
pub fn trim_citations(citations: &[EvidenceItem], limit: usize) -> Vec<EvidenceItem> {
    let mut sorted = citations.to_vec();
    sorted.sort_by(rank_order);
    sorted.truncate(limit);
    sorted
}

/// Top-3 trimming applied when scoring citation alignment.
pub const DEFAULT_CITATION_LIMIT: usize = 3;

#[derive(Serialize)]
struct TableRecord<'a> {
    claim_id: usize,
    claim_text: &'a str,
    supports: &'a [SupportRef],
}

/// Claim→evidence table as newline-delimited JSON with a fixed field order:
/// `{claim_id, claim_text, supports: [{doc_id, span_id, offsets}]}`.
pub fn export_claim_table(claims: &[Claim], rows: &[ClaimEvidenceRow]) -> String {
    let text_of: HashMap<usize, &str> = claims.iter().map(|c| (c.claim_id, c.text.as_str())).collect();
    let mut out = String::new();
    for row in rows {
        let rec = TableRecord {
            claim_id: row.claim_id,
            claim_text: text_of.get(&row.claim_id).copied().unwrap_or(""),
            supports: &row.supports,
        };
        out.push_str(&serde_json::to_string(&rec).expect("table records serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::{Chunk, ChunkMetadata};

    fn ev(doc: &str, span: u32, sim: f64, title: &str) -> EvidenceItem {
        EvidenceItem {
            chunk: Chunk {
                doc_id: CanonicalId::doi(doc).unwrap(),
                span_id: span,
                text: format!("text of {doc}#{span}"),
                char_offset: (span as usize * 100, span as usize * 100 + 80),
                metadata: ChunkMetadata {
                    title: title.into(),
                    ..Default::default()
                },
            },
            similarity: sim,
            retrieved_at_iteration: 0,
        }
    }

    fn pool() -> Vec<EvidenceItem> {
        vec![
            ev("10.1/a", 0, 0.9, "Paper A"),
            ev("10.1/b", 1, 0.8, "Paper B"),
            ev("10.1/c", 2, 0.7, "Paper C"),
        ]
    }

    #[test]
    fn partitions_members_and_fabrications() {
        let draft = "A holds [[cite: doi:10.1/a # 0]]. Z holds [[cite: doi:10.1/z # 0]].";
        let a = align_citations(draft, &pool()).unwrap();
        assert_eq!(a.rows.len(), 1);
        assert_eq!(a.rows[0].claim_id, 1);
        assert_eq!(a.rows[0].supports[0].doc_id.to_string(), "doi:10.1/a");
        assert_eq!(a.rows[0].supports[0].offsets, (0, 80));
        assert_eq!(a.rejected.len(), 1);
        assert_eq!(a.rejected[0].doc_id.to_string(), "doi:10.1/z");
    }

    #[test]
    fn span_must_match_too() {
        let draft = "A holds [[cite: doi:10.1/a # 7]].";
        let a = align_citations(draft, &pool()).unwrap();
        assert!(a.rows.is_empty());
        assert_eq!(a.rejected.len(), 1);
    }

    #[test]
    fn zero_markers_give_empty_alignment() {
        let a = align_citations("Nothing cited here.", &pool()).unwrap();
        assert!(a.rows.is_empty() && a.rejected.is_empty());
    }

    #[test]
    fn malformed_marker_is_an_error_with_position() {
        let err = align_citations("X [[cite: doi:10.1/a 0]].", &pool()).unwrap_err();
        assert!(matches!(err, CitationError::MalformedMarker { position: 2, .. }));
    }

    #[test]
    fn fidelity_hand_counts() {
        let draft = "One [[cite: doi:10.1/a # 0]]. Two [[cite: doi:10.1/q # 0]]. Three.";
        let a = align_citations(draft, &pool()).unwrap();
        let r = compute_fidelity(&a.rows, &a.rejected, &a.claims, &pool(), &BTreeMap::new());
        assert_eq!(r.fabricated_rate, 0.5);
        assert_eq!((r.fabricated, r.citations), (1, 2));
        assert!((r.claim_coverage - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((r.supported_claims, r.total_claims), (1, 3));
    }

    #[test]
    fn three_claims_two_supported() {
        let draft = "One [[cite: doi:10.1/a # 0]]. Two [[cite: doi:10.1/b # 1]]. Three.";
        let a = align_citations(draft, &pool()).unwrap();
        let r = compute_fidelity(&a.rows, &a.rejected, &a.claims, &pool(), &BTreeMap::new());
        assert_eq!(r.claim_coverage, 2.0 / 3.0);
    }

    #[test]
    fn zero_claims_is_vacuous() {
        let r = compute_fidelity(&[], &[], &[], &pool(), &BTreeMap::new());
        assert_eq!(r.claim_coverage, 1.0);
        assert!(r.vacuous_coverage);
    }

    #[test]
    fn title_match_is_normalized_equality() {
        let draft = "One [[cite: doi:10.1/a # 0]]. Two [[cite: doi:10.1/b # 1]].";
        let a = align_citations(draft, &pool()).unwrap();
        let mut shown = BTreeMap::new();
        shown.insert(CanonicalId::doi("10.1/a").unwrap(), "paper a.".to_string());
        shown.insert(CanonicalId::doi("10.1/b").unwrap(), "Paper Bee".to_string());
        let r = compute_fidelity(&a.rows, &a.rejected, &a.claims, &pool(), &shown);
        assert_eq!((r.titles_matched, r.titles_checked), (1, 2));
        assert_eq!(r.title_match_rate, 0.5);
    }

    #[test]
    fn enforce_strips_fabrications() {
        let draft = "A [[cite: doi:10.1/a # 0]]. B [[cite: doi:10.1/b # 1]]. Z [[cite: doi:10.9/zz # 3]].";
        match enforce_closed_world(draft, &pool(), &FidelityPolicy::default()) {
            ClosedWorldOutcome::Final(f) => {
                assert_eq!(f.text, "A [[cite: doi:10.1/a # 0]]. B [[cite: doi:10.1/b # 1]]. Z.");
                assert_eq!(f.citations.len(), 2);
                assert_eq!(f.report.fabricated_rate, 0.0);
                assert_eq!(f.draft_report.fabricated, 1);
                assert_eq!(f.rejected.len(), 1);
                assert_eq!(f.report.title_match_rate, 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn enforce_abstains_when_nothing_is_supported() {
        let draft = "A [[cite: doi:10.9/x # 0]]. B [[cite: doi:10.9/y # 1]].";
        assert!(matches!(
            enforce_closed_world(draft, &pool(), &FidelityPolicy::default()),
            ClosedWorldOutcome::Abstain(AbstainReason::FidelityCheckFailed { .. })
        ));
    }

    #[test]
    fn enforce_passes_valid_drafts_through() {
        let draft = "A [[cite: doi:10.1/a # 0]].\nB [[cite: doi:10.1/c # 2]].";
        match enforce_closed_world(draft, &pool(), &FidelityPolicy::default()) {
            ClosedWorldOutcome::Final(f) => {
                assert_eq!(f.text, draft);
                let ids: Vec<_> = f.citations.iter().map(|c| c.doc_id.to_string()).collect();
                assert_eq!(ids, vec!["doi:10.1/a", "doi:10.1/c"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trim_keeps_top_three_with_key_tiebreak() {
        let items = vec![
            ev("10.1/e", 0, 0.5, ""),
            ev("10.1/d", 0, 0.6, ""),
            ev("10.1/c", 0, 0.7, ""),
            ev("10.1/b", 0, 0.7, ""),
            ev("10.1/a", 0, 0.6, ""),
        ];
        let kept: Vec<_> = trim_citations(&items, 3)
            .iter()
            .map(|e| e.doc_id().to_string())
            .collect();
        assert_eq!(kept, vec!["doi:10.1/b", "doi:10.1/c", "doi:10.1/a"]);
        assert_eq!(trim_citations(&items[..2], 3).len(), 2);
    }

    #[test]
    fn claim_table_export_is_stable() {
        let draft = "Bandwidth is 67 GHz [[cite: doi:10.1/a # 0]] [[cite: doi:10.1/b # 1]]. Loss is low.";
        let a = align_citations(draft, &pool()).unwrap();
        let table = export_claim_table(&a.claims, &a.rows);
        assert_eq!(
            table,
            concat!(
                r#"{"claim_id":1,"claim_text":"Bandwidth is 67 GHz.","supports":["#,
                r#"{"doc_id":"doi:10.1/a","span_id":0,"offsets":[0,80]},"#,
                r#"{"doc_id":"doi:10.1/b","span_id":1,"offsets":[100,180]}]}"#,
                "\n"
            )
        );
    }
}
