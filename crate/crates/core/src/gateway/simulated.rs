//! Offline heuristic backend.
//!
//! Produces well-formed replies for every built-in state from the request's
//! structured bindings (similarity scores, evidence blocks), so the whole
//! engine can be exercised without network access or credentials. Its
//! judgements are crude similarity thresholds, not language understanding.

use std::collections::BTreeSet;

use regex::Regex;

use super::{
    render_decomposition, render_relevance, render_self_eval, tags, CompletionRequest, ConfidenceScore,
    ConfidenceVerdict, GatewayError, Provider, ProviderReply, CONFIDENT_AT,
};
use crate::citation::{MARKER_CLOSE, MARKER_OPEN};

#[derive(Debug, Clone)]
pub struct SimulatedProvider {
    /// Minimum `sim_score` to call a question relevant.
    pub relevance_threshold: f64,
    /// Similarity cut-offs for scores 0.25, 0.5, 0.75 and 1.0.
    pub score_steps: [f64; 4],
}

impl Default for SimulatedProvider {
    fn default() -> Self {
        Self {
            relevance_threshold: 0.12,
            score_steps: [0.15, 0.25, 0.35, 0.6],
        }
    }
}

const STOPWORDS: [&str; 40] = [
    "a", "an", "and", "are", "as", "at", "be", "by", "can", "do", "does", "for", "from", "how", "in", "is", "it", "of",
    "on", "or", "should", "than", "that", "the", "their", "this", "to", "under", "versus", "vs", "was", "what", "when",
    "where", "which", "who", "why", "with", "would", "you",
];

fn content_words(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    crate::retrieval::tokenize(text)
        .into_iter()
        .filter(|t| t.len() > 1 && !STOPWORDS.contains(&t.as_str()))
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

/// One `[[cite: ...]] title` block of a rendered evidence list.
struct EvidenceBlock {
    marker: String,
    title: String,
    text: String,
}

fn evidence_blocks(context: &str) -> Vec<EvidenceBlock> {
    let mut blocks: Vec<EvidenceBlock> = Vec::new();
    for line in context.lines() {
        let t = line.trim();
        if t.starts_with(MARKER_OPEN) {
            if let Some(end) = t.find(MARKER_CLOSE) {
                let marker = t[..end + MARKER_CLOSE.len()].to_string();
                let title = t[end + MARKER_CLOSE.len()..].trim().to_string();
                blocks.push(EvidenceBlock {
                    marker,
                    title,
                    text: String::new(),
                });
                continue;
            }
        }
        if let Some(b) = blocks.last_mut() {
            if !t.is_empty() {
                if !b.text.is_empty() {
                    b.text.push(' ');
                }
                b.text.push_str(t);
            }
        }
    }
    blocks
}

fn first_sentence(text: &str) -> String {
    let cut = text
        .match_indices(". ")
        .map(|(i, _)| i + 1)
        .find(|&i| i >= 40)
        .unwrap_or(text.len());
    let mut s: String = text[..cut].chars().take(240).collect();
    s = s
        .replace(['?', '!'], ",")
        .trim()
        .trim_end_matches(['.', ',', ';', ':'])
        .to_string();
    s.push('.');
    s
}

impl SimulatedProvider {
    pub fn score_for(&self, similarity: f64) -> ConfidenceScore {
        let steps = self.score_steps.iter().filter(|&&s| similarity >= s).count();
        ConfidenceScore::ALL[steps]
    }

    fn reply(&self, req: &CompletionRequest) -> String {
        match req.state_tag.as_str() {
            tags::RELEVANCE => {
                let sim = req.var_f64("sim_score").unwrap_or(0.0);
                render_relevance(sim >= self.relevance_threshold)
            }
            tags::CONFIDENCE => {
                let score = self.score_for(req.var_f64("sim_score").unwrap_or(0.0));
                let reasoning = if score >= CONFIDENT_AT {
                    "Retrieved context closely matches the question."
                } else if score > ConfidenceScore::ZERO {
                    "Context is related but leaves parts of the question open."
                } else {
                    "Context barely touches the question."
                };
                ConfidenceVerdict {
                    confidence_score: score,
                    confident: score >= CONFIDENT_AT,
                    reasoning: reasoning.into(),
                }
                .to_reply()
            }
            tags::FAST_DRAFT => format!("Provisional note on: {}", req.var_text("question").trim()),
            tags::DECOMPOSITION => {
                let words = content_words(&req.var_text("question"));
                let focus = if words.is_empty() {
                    "the question".to_string()
                } else {
                    words.iter().take(4).cloned().collect::<Vec<_>>().join(" ")
                };
                let mut items = vec![
                    format!("Device physics governing {focus}"),
                    format!("System-level impact of {focus}"),
                ];
                if words.len() >= 6 {
                    items.push(format!("Implementation challenges for {focus}"));
                }
                render_decomposition(&items)
            }
            tags::SELF_EVALUATION => render_self_eval(self.score_for(req.var_f64("mean_sim").unwrap_or(0.0))),
            tags::ANSWER => {
                let blocks = evidence_blocks(&req.var_text("base_context"));
                if blocks.is_empty() {
                    return "- **No supporting evidence**\n    - The knowledge base returned no passages for this question."
                        .into();
                }
                blocks
                    .iter()
                    .take(3)
                    .map(|b| {
                        let title = if b.title.is_empty() { "Evidence" } else { &b.title };
                        format!(
                            "- **{}**\n    - {} {}",
                            title.replace('*', ""),
                            first_sentence(&b.text),
                            b.marker
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            }
            tags::TITLE => {
                let mut words: Vec<String> = content_words(&req.var_text("question"))
                    .iter()
                    .take(5)
                    .map(|w| capitalize(w))
                    .collect();
                for pad in ["Research", "Session", "Notes"] {
                    if words.len() >= 3 {
                        break;
                    }
                    words.push(pad.into());
                }
                words.join(" ")
            }
            tags::JUDGE => {
                let gold: BTreeSet<String> = content_words(&req.var_text("gold")).into_iter().collect();
                let answer: BTreeSet<String> = content_words(&req.var_text("answer")).into_iter().collect();
                let ok = if gold.is_empty() {
                    !answer.is_empty()
                } else {
                    gold.intersection(&answer).count() as f64 / gold.len() as f64 >= 0.3
                };
                if ok { "YES" } else { "NO" }.into()
            }
            tags::EXTRACTION => {
                let excerpt = req.var_text("excerpt");
                let mut obj = serde_json::Map::new();
                let energy = Regex::new(r"(\d+(?:\.\d+)?)\s*fJ\s*/\s*bit").expect("valid regex");
                if let Some(v) = energy.captures(&excerpt).and_then(|c| c[1].parse::<f64>().ok()) {
                    obj.insert("energy_per_bit_fj".into(), v.into());
                }
                for pkg in ["flip-chip", "wire-bond", "co-packaged", "hybrid integration"] {
                    if excerpt.to_lowercase().contains(pkg) {
                        obj.insert("packaging".into(), pkg.into());
                        break;
                    }
                }
                serde_json::Value::Object(obj).to_string()
            }
            _ => String::new(),
        }
    }
}

impl Provider for SimulatedProvider {
    fn name(&self) -> &str {
        "simulated"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<ProviderReply, GatewayError> {
        Ok(ProviderReply::estimated(req, self.reply(req)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{
        parse_confidence, parse_decomposition, parse_title, Gateway, ModelRoleBinding, RateTable, Role,
    };
    use std::sync::Arc;

    fn gw() -> Gateway {
        Gateway::new(Arc::new(SimulatedProvider::default()), RateTable::builtin())
    }

    #[test]
    fn replies_are_well_formed() {
        let g = gw();
        let b = ModelRoleBinding::new(Role::Confidence, "o4-mini");
        let c = g
            .ask(
                tags::CONFIDENCE,
                &b,
                crate::bindings! { "question" => "q", "base_context" => "", "sim_score" => 0.4 },
                parse_confidence,
                1,
            )
            .unwrap();
        assert_eq!(c.value.confidence_score, ConfidenceScore::THREE_QUARTERS);
        let d = g
            .ask(
                tags::DECOMPOSITION,
                &b,
                crate::bindings! { "question" => "What limits the 3-dB bandwidth of thin-film lithium niobate modulators?" },
                parse_decomposition,
                1,
            )
            .unwrap();
        assert!((2..=3).contains(&d.value.len()));
        let t = g
            .ask(
                tags::TITLE,
                &b,
                crate::bindings! { "question" => "Why?" },
                parse_title,
                1,
            )
            .unwrap();
        assert_eq!(t.value, "Research Session Notes");
    }

    #[test]
    fn answer_cites_given_markers() {
        let ctx =
            "[[cite: doi:10.1/a # 0]] Paper A (2020)\nBandwidth exceeds 100 GHz in this device design. More text.\n\n\
                   [[cite: doi:10.1/b # 2]] Paper B\nLoss is low.";
        let g = gw();
        let b = ModelRoleBinding::new(Role::Knowledge, "o4-mini");
        let req = g
            .request(
                tags::ANSWER,
                &b,
                crate::bindings! { "question" => "q", "base_context" => ctx, "confidence" => 0.75, "mean_sim" => 0.5, "scaffold" => "" },
            )
            .unwrap();
        let (text, _) = g.call(&req).unwrap();
        assert!(text.contains("[[cite: doi:10.1/a # 0]]"));
        assert!(text.contains("[[cite: doi:10.1/b # 2]]"));
        let claims = crate::citation::extract_claims(&text).unwrap();
        assert_eq!(claims.len(), 2);
    }

    #[test]
    fn score_steps() {
        let s = SimulatedProvider::default();
        assert_eq!(s.score_for(0.0), ConfidenceScore::ZERO);
        assert_eq!(s.score_for(0.3), ConfidenceScore::HALF);
        assert_eq!(s.score_for(0.9), ConfidenceScore::ONE);
    }
}
