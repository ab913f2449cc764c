//! Structured-text parsing behind a pluggable adapter.
//!
//! The bundled [`SyntheticPdfParser`] reads the line-oriented stand-in format
//! used by the fixture corpus; a real deployment would put an external
//! full-text service behind [`DocumentParser`].

use serde::{Deserialize, Serialize};

use super::IngestError;

pub const SYNTH_PDF_MAGIC: &str = "%PDF-SYNTH 1.0";
pub const SYNTH_PDF_END: &str = "%%EOF";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    pub paragraphs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredDocument {
    pub title: String,
    pub sections: Vec<Section>,
    pub references: Vec<String>,
}

impl StructuredDocument {
    /// Paragraphs of every section, in order, separated by blank lines.
    pub fn full_text(&self) -> String {
        self.sections
            .iter()
            .flat_map(|s| s.paragraphs.iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    pub fn section(&self, heading: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.heading.eq_ignore_ascii_case(heading))
    }
}

pub trait DocumentParser: Send + Sync {
    fn name(&self) -> &str;
    fn parse(&self, bytes: &[u8]) -> Result<StructuredDocument, IngestError>;
}

/// Rejects empty input, then delegates to the adapter.
pub fn parse_document(bytes: &[u8], parser: &dyn DocumentParser) -> Result<StructuredDocument, IngestError> {
    if bytes.is_empty() {
        return Err(IngestError::EmptyInput("document bytes".into()));
    }
    parser.parse(bytes)
}

fn push_paragraph(sections: &mut Vec<Section>, para: &mut Vec<String>) {
    if para.is_empty() {
        return;
    }
    let text = para.join(" ");
    para.clear();
    if sections.is_empty() {
        sections.push(Section {
            heading: String::new(),
            paragraphs: Vec::new(),
        });
    }
    sections.last_mut().expect("non-empty").paragraphs.push(text);
}

/// Parses the synthetic format:
///
/// ```text
/// %PDF-SYNTH 1.0
/// title: <title>
/// == <section heading>
/// <paragraph lines; blank line separates paragraphs>
/// refs: <ref>; <ref>
/// %%EOF
/// ```
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticPdfParser;

impl DocumentParser for SyntheticPdfParser {
    fn name(&self) -> &str {
        "synthetic-pdf"
    }

    fn parse(&self, bytes: &[u8]) -> Result<StructuredDocument, IngestError> {
        let text = std::str::from_utf8(bytes).map_err(|e| IngestError::Malformed(format!("not UTF-8: {e}")))?;
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(SYNTH_PDF_MAGIC) {
            return Err(IngestError::Malformed("missing header".into()));
        }
        let mut title = None;
        let mut sections: Vec<Section> = Vec::new();
        let mut references = Vec::new();
        let mut para = Vec::new();
        let mut terminated = false;
        for line in lines {
            let line = line.trim_end();
            if line.trim() == SYNTH_PDF_END {
                terminated = true;
                break;
            }
            if let Some(t) = line.strip_prefix("title:") {
                title = Some(t.trim().to_string());
            } else if let Some(h) = line.strip_prefix("==") {
                push_paragraph(&mut sections, &mut para);
                sections.push(Section {
                    heading: h.trim().to_string(),
                    paragraphs: Vec::new(),
                });
            } else if let Some(r) = line.strip_prefix("refs:") {
                push_paragraph(&mut sections, &mut para);
                references.extend(
                    r.split(';')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(str::to_string),
                );
            } else if line.trim().is_empty() {
                push_paragraph(&mut sections, &mut para);
            } else {
                para.push(line.trim().to_string());
            }
        }
        if !terminated {
            return Err(IngestError::Malformed("truncated: no end marker".into()));
        }
        push_paragraph(&mut sections, &mut para);
        let title = title.ok_or_else(|| IngestError::Malformed("missing title".into()))?;
        Ok(StructuredDocument {
            title,
            sections,
            references,
        })
    }
}

/// Plain text: the first non-blank line is the title, `## ` lines start
/// sections, blank lines separate paragraphs.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlainTextParser;

impl DocumentParser for PlainTextParser {
    fn name(&self) -> &str {
        "plain-text"
    }

    fn parse(&self, bytes: &[u8]) -> Result<StructuredDocument, IngestError> {
        let text = std::str::from_utf8(bytes).map_err(|e| IngestError::Malformed(format!("not UTF-8: {e}")))?;
        let mut lines = text.lines().skip_while(|l| l.trim().is_empty());
        let title = lines
            .next()
            .map(|l| l.trim().trim_start_matches('#').trim().to_string())
            .ok_or_else(|| IngestError::Malformed("no text".into()))?;
        let mut sections = Vec::new();
        let mut para = Vec::new();
        for line in lines {
            if let Some(h) = line.strip_prefix("## ") {
                push_paragraph(&mut sections, &mut para);
                sections.push(Section {
                    heading: h.trim().to_string(),
                    paragraphs: Vec::new(),
                });
            } else if line.trim().is_empty() {
                push_paragraph(&mut sections, &mut para);
            } else {
                para.push(line.trim().to_string());
            }
        }
        push_paragraph(&mut sections, &mut para);
        Ok(StructuredDocument {
            title,
            sections,
            references: Vec::new(),
        })
    }
}

/// Renders a document in the synthetic format [`SyntheticPdfParser`] reads.
pub fn render_synthetic_pdf(doc: &StructuredDocument) -> Vec<u8> {
    let mut out = format!("{SYNTH_PDF_MAGIC}\ntitle: {}\n", doc.title);
    for s in &doc.sections {
        out.push_str(&format!("== {}\n", s.heading));
        for p in &s.paragraphs {
            out.push_str(p);
            out.push_str("\n\n");
        }
    }
    if !doc.references.is_empty() {
        out.push_str(&format!("refs: {}\n", doc.references.join("; ")));
    }
    out.push_str(SYNTH_PDF_END);
    out.push('\n');
    out.into_bytes()
}
