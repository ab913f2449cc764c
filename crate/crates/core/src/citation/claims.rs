//! Sentence-level claim extraction.
//!
//! A claim is a declarative sentence (ends in `.` or `!`), or a line fragment
//! that carries at least one citation marker. Questions and unpunctuated
//! fragments without markers (headings, bullet titles) are not claims.
//! Markers that sit on their own attach to the preceding claim, or to the
//! following one when nothing precedes them.

use serde::{Deserialize, Serialize};

use super::marker::{find_markers, strip_ranges, CitationMarker};
use super::CitationError;

const ABBREVIATIONS: [&str; 19] = [
    "e.g", "i.e", "al", "fig", "figs", "eq", "eqs", "vs", "approx", "ref", "refs", "dr", "prof", "sec", "cf", "resp",
    "tab", "vol", "pp",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub claim_id: usize,
    pub text: String,
    /// Byte range of the sentence in the answer text, including its markers.
    pub sentence_span: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SegmentKind {
    Declarative,
    Question,
    Fragment,
}

#[derive(Debug, Clone)]
struct Segment {
    start: usize,
    end: usize,
    kind: SegmentKind,
}

#[derive(Debug, Clone, Default)]
pub struct Segmentation {
    pub claims: Vec<Claim>,
    /// For each marker (by index), the index into `claims` it supports.
    pub attachments: Vec<Option<usize>>,
}

pub fn extract_claims(text: &str) -> Result<Vec<Claim>, CitationError> {
    let markers = find_markers(text)?;
    Ok(split_claims(text, &markers).claims)
}

pub fn split_claims(text: &str, markers: &[CitationMarker]) -> Segmentation {
    let segments = segment(text, markers);
    let marker_in = |seg: &Segment| {
        markers
            .iter()
            .enumerate()
            .filter(|(_, m)| m.range.start >= seg.start && m.range.end <= seg.end)
            .map(|(i, _)| i)
            .collect::<Vec<_>>()
    };

    // Pass 1: decide which segments are claims, remember marker ownership.
    let mut claims = Vec::new();
    let mut seg_claim: Vec<Option<usize>> = Vec::with_capacity(segments.len());
    let mut seg_markers = Vec::with_capacity(segments.len());
    for seg in &segments {
        let owned = marker_in(seg);
        let ranges: Vec<_> = owned
            .iter()
            .map(|&i| markers[i].range.start - seg.start..markers[i].range.end - seg.start)
            .collect();
        let stripped = strip_ranges(&text[seg.start..seg.end], &ranges);
        let body = stripped.trim();
        let has_content = body.chars().any(char::is_alphanumeric);
        let is_claim = has_content
            && match seg.kind {
                SegmentKind::Declarative => true,
                SegmentKind::Fragment => !owned.is_empty(),
                SegmentKind::Question => false,
            };
        if is_claim {
            seg_claim.push(Some(claims.len()));
            claims.push(Claim {
                claim_id: claims.len() + 1,
                text: tidy(body),
                sentence_span: (seg.start, seg.end),
            });
        } else {
            seg_claim.push(None);
        }
        seg_markers.push(owned);
    }

    // Pass 2: attach markers; markers of non-claim segments go to the
    // nearest preceding claim, else the nearest following claim.
    let mut attachments = vec![None; markers.len()];
    for (si, owned) in seg_markers.iter().enumerate() {
        let target = seg_claim[si]
            .or_else(|| seg_claim[..si].iter().rev().find_map(|c| *c))
            .or_else(|| seg_claim[si + 1..].iter().find_map(|c| *c));
        for &mi in owned {
            attachments[mi] = target;
        }
    }
    // Markers outside every segment cannot happen (segments cover all
    // non-whitespace), but keep them orphaned if they do.
    Segmentation { claims, attachments }
}

fn tidy(s: &str) -> String {
    let s = s.trim_start_matches(|c: char| c == '-' || c == '*' || c == '•' || c.is_whitespace());
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn in_marker(pos: usize, markers: &[CitationMarker]) -> Option<usize> {
    markers
        .iter()
        .find(|m| pos >= m.range.start && pos < m.range.end)
        .map(|m| m.range.end)
}

fn is_abbreviation(text: &str, dot_pos: usize) -> bool {
    let word_start = text[..dot_pos]
        .rfind(|c: char| c.is_whitespace() || c == '(')
        .map_or(0, |p| p + 1);
    let word = &text[word_start..dot_pos];
    if word.is_empty() {
        return false;
    }
    let lower = word.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    // single-letter initials such as "J."
    let mut chars = word.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if c.is_uppercase())
}

fn segment(text: &str, markers: &[CitationMarker]) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut start: Option<usize> = None;
    let mut last_non_ws = 0;
    let mut pos = 0;
    let bytes_len = text.len();

    while pos < bytes_len {
        if let Some(end) = in_marker(pos, markers) {
            start.get_or_insert(pos);
            last_non_ws = end;
            pos = end;
            continue;
        }
        let c = text[pos..].chars().next().unwrap_or(' ');
        let next_pos = pos + c.len_utf8();
        if c == '\n' {
            if let Some(s) = start.take() {
                segments.push(Segment {
                    start: s,
                    end: last_non_ws,
                    kind: SegmentKind::Fragment,
                });
            }
            pos = next_pos;
            continue;
        }
        if c.is_whitespace() {
            pos = next_pos;
            continue;
        }
        start.get_or_insert(pos);
        last_non_ws = next_pos;

        if matches!(c, '.' | '!' | '?') {
            let followed_by_break = text[next_pos..]
                .chars()
                .next()
                .is_none_or(|n| n.is_whitespace() || text[next_pos..].starts_with(super::marker::MARKER_OPEN));
            let at_end = text[next_pos..].trim().is_empty();
            let terminal = followed_by_break && (at_end || !(c == '.' && is_abbreviation(text, pos)));
            if terminal {
                let mut end = next_pos;
                // absorb markers that trail the punctuation on the same line
                loop {
                    let ws = text[end..]
                        .char_indices()
                        .find(|(_, ch)| !(*ch == ' ' || *ch == '\t'))
                        .map_or(text.len() - end, |(i, _)| i);
                    let probe = end + ws;
                    match markers.iter().find(|m| m.range.start == probe) {
                        Some(m) => end = m.range.end,
                        None => break,
                    }
                }
                let kind = if c == '?' {
                    SegmentKind::Question
                } else {
                    SegmentKind::Declarative
                };
                segments.push(Segment {
                    start: start.take().unwrap_or(pos),
                    end,
                    kind,
                });
                pos = end;
                continue;
            }
        }
        pos = next_pos;
    }
    if let Some(s) = start {
        segments.push(Segment {
            start: s,
            end: last_non_ws,
            kind: SegmentKind::Fragment,
        });
    }
    segments
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_terminal_punctuation_with_guards() {
        let text =
            "Thin-film LN reaches 2.2 V·cm, e.g. in Fig. 3 of Smith et al. results. Is it lossy? Loss is 0.5 dB!";
        let claims = extract_claims(text).unwrap();
        let texts: Vec<_> = claims.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(
            texts,
            vec![
                "Thin-film LN reaches 2.2 V·cm, e.g. in Fig. 3 of Smith et al. results.",
                "Loss is 0.5 dB!"
            ]
        );
        assert_eq!(claims[0].claim_id, 1);
        assert_eq!(claims[1].claim_id, 2);
    }

    #[test]
    fn trailing_markers_attach_to_their_sentence() {
        let text = "Bandwidth exceeds 100 GHz. [[cite: doi:10.1/a # 1]] Loss is low [[cite: doi:10.1/b # 2]].";
        let markers = find_markers(text).unwrap();
        let seg = split_claims(text, &markers);
        assert_eq!(seg.claims.len(), 2);
        assert_eq!(seg.attachments, vec![Some(0), Some(1)]);
        assert_eq!(seg.claims[0].text, "Bandwidth exceeds 100 GHz.");
        assert_eq!(seg.claims[1].text, "Loss is low.");
        let (s, e) = seg.claims[0].sentence_span;
        assert!(text[s..e].ends_with("# 1]]"));
    }

    #[test]
    fn headings_are_not_claims_but_cited_bullets_are() {
        let text =
            "- **Key Point**\n    - The device uses a p-cladding [[cite: doi:10.1/a # 0]]\n[[cite: doi:10.1/b # 4]]\n";
        let markers = find_markers(text).unwrap();
        let seg = split_claims(text, &markers);
        assert_eq!(seg.claims.len(), 1);
        assert_eq!(seg.claims[0].text, "The device uses a p-cladding");
        // the marker-only line attaches to the preceding claim
        assert_eq!(seg.attachments, vec![Some(0), Some(0)]);
    }

    #[test]
    fn spans_do_not_overlap() {
        let text = "One. Two! Three? Four. [[cite: doi:10.1/a # 0]] Five";
        let claims = extract_claims(text).unwrap();
        for w in claims.windows(2) {
            assert!(w[0].sentence_span.1 <= w[1].sentence_span.0);
        }
        assert_eq!(claims.len(), 3);
    }

    #[test]
    fn dois_inside_markers_do_not_split() {
        let text = "Claim [[cite: doi:10.1364/oe.12. # 3]] continues here.";
        let claims = extract_claims(text).unwrap();
        assert_eq!(claims.len(), 1);
    }
}
