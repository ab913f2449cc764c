//! Two-pass metric extraction.
//!
//! The deterministic pass applies a small rule table of patterns with unit
//! normalization (GHz, V·cm, dB, fJ/bit). The reasoning pass asks a model to
//! fill only the fields the rules left empty.

use std::sync::LazyLock;

use regex::{Captures, Regex};
use serde_json::Value;

use super::parse::StructuredDocument;
use crate::gateway::{strip_fence, tags, Gateway, ModelRoleBinding, SchemaViolation};
use crate::store::{MetricField, MetricValues, Provenance};

/// Reasoning-pass excerpt size, in estimated tokens (four characters each).
pub const EXCERPT_TOKEN_LIMIT: usize = 4000;

/// Template sent with the reasoning-pass prompt.
pub const METRICS_SCHEMA: &str = r#"{
  "bandwidth_3db_ghz": "number, 3-dB bandwidth in GHz",
  "vpi_l_v_cm": "number, half-wave voltage-length product in V*cm",
  "insertion_loss_db": "number, insertion loss in dB",
  "energy_per_bit_fj": "number, switching energy in fJ per bit",
  "packaging": "string, packaging or integration approach"
}"#;

const NUM: &str = r"(\d+(?:\.\d+)?)";

struct Rule {
    field: MetricField,
    pattern: Regex,
    /// Power of ten applied for the captured unit.
    scale: fn(&str) -> i32,
}

fn bandwidth_scale(unit: &str) -> i32 {
    match unit.to_ascii_lowercase().as_str() {
        "thz" => 3,
        "mhz" => -3,
        _ => 0,
    }
}

fn length_scale(unit: &str) -> i32 {
    if unit.eq_ignore_ascii_case("mm") {
        -1
    } else {
        0
    }
}

fn energy_scale(unit: &str) -> i32 {
    if unit.eq_ignore_ascii_case("pj") {
        3
    } else {
        0
    }
}

fn no_scale(_: &str) -> i32 {
    0
}

static RULES: LazyLock<Vec<Rule>> = LazyLock::new(|| {
    let bw_head = r"3\s*-?\s*dB\s+(?:electro-optic(?:al)?\s+|EO\s+|modulation\s+)?bandwidth";
    let il_head = r"(?:on-chip\s+|fiber-to-fiber\s+)?insertion\s+loss";
    let rule = |field, pat: String, scale| Rule {
        field,
        pattern: Regex::new(&format!("(?i){pat}")).expect("valid rule pattern"),
        scale,
    };
    vec![
        rule(
            MetricField::Bandwidth3dbGhz,
            format!(r"{bw_head}\b[^0-9\n]{{0,40}}?{NUM}\s*(THz|GHz|MHz)\b"),
            bandwidth_scale,
        ),
        rule(
            MetricField::Bandwidth3dbGhz,
            format!(r"{NUM}\s*(THz|GHz|MHz)\s+(?:of\s+)?{bw_head}"),
            bandwidth_scale,
        ),
        rule(
            MetricField::VpiLVCm,
            format!(
                r"V\s*(?:π|pi|_\{{?pi\}}?)\s*(?:[·⋅*×]\s*)?L\b[^0-9\n]{{0,30}}?{NUM}\s*V\s*(?:[·⋅*×-]\s*)?(cm|mm)\b"
            ),
            length_scale,
        ),
        rule(
            MetricField::InsertionLossDb,
            format!(r"{il_head}\b[^0-9\n]{{0,30}}?{NUM}\s*(dB)\b"),
            no_scale,
        ),
        rule(
            MetricField::InsertionLossDb,
            format!(r"{NUM}\s*(dB)\s+(?:of\s+)?{il_head}"),
            no_scale,
        ),
        rule(
            MetricField::EnergyPerBitFj,
            format!(r"{NUM}\s*(fJ|pJ)\s*(?:/|per)\s*bit\b"),
            energy_scale,
        ),
    ]
});

/// Multiplies a non-negative decimal literal by `10^pow` by moving the decimal
/// point in the string, so `0.067` THz becomes exactly `67.0` GHz.
fn scale_decimal(literal: &str, pow: i32) -> Option<f64> {
    let (int, frac) = literal.split_once('.').unwrap_or((literal, ""));
    let digits = format!("{int}{frac}");
    let point = int.len() as i64 + pow as i64;
    let shifted = if point <= 0 {
        format!("0.{}{}", "0".repeat((-point) as usize), digits)
    } else if point as usize >= digits.len() {
        format!("{}{}", digits, "0".repeat(point as usize - digits.len()))
    } else {
        let (a, b) = digits.split_at(point as usize);
        format!("{a}.{b}")
    };
    shifted.parse().ok()
}

fn value_of(rule: &Rule, caps: &Captures<'_>) -> Option<f64> {
    scale_decimal(&caps[1], (rule.scale)(&caps[2]))
}

/// Applies the rule table to raw text. For each field the earliest match in
/// the text wins.
pub fn extract_deterministic_text(text: &str) -> MetricValues {
    let mut best: Vec<(MetricField, usize, f64)> = Vec::new();
    for rule in RULES.iter() {
        if let Some(caps) = rule.pattern.captures(text) {
            let start = caps.get(0).expect("whole match").start();
            let Some(v) = value_of(rule, &caps) else { continue };
            match best.iter_mut().find(|(f, _, _)| *f == rule.field) {
                Some(slot) if start < slot.1 => *slot = (rule.field, start, v),
                Some(_) => {}
                None => best.push((rule.field, start, v)),
            }
        }
    }
    let mut out = MetricValues::default();
    for (field, _, v) in best {
        out.set_number(field, v, Provenance::Deterministic);
    }
    out
}

/// Deterministic pass over the title and body of a parsed document.
pub fn extract_deterministic(doc: &StructuredDocument) -> MetricValues {
    extract_deterministic_text(&format!("{}\n\n{}", doc.title, doc.full_text()))
}

fn results_like(heading: &str) -> bool {
    let h = heading.to_ascii_lowercase();
    [
        "abstract",
        "result",
        "measurement",
        "performance",
        "characteriz",
        "experiment",
        "discussion",
    ]
    .iter()
    .any(|k| h.contains(k))
}

/// The abstract plus results-like sections, cut to [`EXCERPT_TOKEN_LIMIT`].
/// Falls back to the whole body when no section qualifies.
pub fn select_excerpt(abstract_text: &str, doc: &StructuredDocument) -> String {
    let mut parts: Vec<&str> = Vec::new();
    if !abstract_text.trim().is_empty() {
        parts.push(abstract_text.trim());
    }
    for s in doc.sections.iter().filter(|s| results_like(&s.heading)) {
        parts.extend(
            s.paragraphs
                .iter()
                .map(String::as_str)
                .filter(|p| *p != abstract_text.trim()),
        );
    }
    let mut text = if parts.is_empty() {
        doc.full_text()
    } else {
        parts.join("\n\n")
    };
    let limit = EXCERPT_TOKEN_LIMIT * 4;
    if let Some((cut, _)) = text.char_indices().nth(limit) {
        text.truncate(cut);
    }
    text
}

/// Validates a reasoning-pass reply. The reply must be a JSON object; fields
/// with the wrong type or a negative or non-finite value are dropped
/// individually, unknown keys are ignored.
pub fn parse_extraction(reply: &str) -> Result<MetricValues, SchemaViolation> {
    let value: Value =
        serde_json::from_str(strip_fence(reply)).map_err(|e| SchemaViolation(format!("not JSON: {e}")))?;
    let Value::Object(map) = value else {
        return Err(SchemaViolation("extraction reply is not a JSON object".into()));
    };
    let mut out = MetricValues::default();
    for (key, v) in &map {
        let Ok(field) = key.parse::<MetricField>() else {
            tracing::debug!(%key, "ignoring unknown extraction key");
            continue;
        };
        match (field, v) {
            (_, Value::Null) => {}
            (MetricField::Packaging, Value::String(s)) if !s.trim().is_empty() => {
                out.set_packaging(s.trim(), Provenance::Reasoning)
            }
            (f, Value::Number(n)) if f.is_numeric() => match n.as_f64() {
                Some(x) if x.is_finite() && x >= 0.0 => out.set_number(f, x, Provenance::Reasoning),
                _ => tracing::warn!(field = f.name(), value = %n, "rejecting out-of-range extracted value"),
            },
            (f, other) => tracing::warn!(field = f.name(), value = %other, "rejecting mistyped extracted value"),
        }
    }
    Ok(out)
}

/// Reasoning pass. Returns `deterministic` with its absent fields filled from
/// the model reply; present fields are never touched. A failed call leaves
/// the deterministic values as they are.
pub fn extract_reasoning(
    excerpt: &str,
    deterministic: &MetricValues,
    gateway: &Gateway,
    binding: &ModelRoleBinding,
    budget: u32,
) -> MetricValues {
    let mut out = deterministic.clone();
    if MetricField::ALL.iter().all(|f| deterministic.is_present(*f)) {
        return out;
    }
    let vars = crate::bindings! { "excerpt" => excerpt, "schema" => METRICS_SCHEMA };
    match gateway.ask(tags::EXTRACTION, binding, vars, parse_extraction, budget) {
        Ok(done) => {
            for field in done.value.present_fields() {
                if deterministic.is_present(field) {
                    tracing::debug!(field = field.name(), "reasoning value ignored; field already extracted");
                    continue;
                }
                match field {
                    MetricField::Packaging => {
                        out.set_packaging(done.value.packaging.clone().expect("present"), Provenance::Reasoning)
                    }
                    f => out.set_number(f, done.value.number(f).expect("present"), Provenance::Reasoning),
                }
            }
        }
        Err(e) => tracing::warn!(error = %e, "reasoning extraction failed; keeping deterministic fields only"),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{RateTable, Role, ScriptedProvider};
    use std::sync::Arc;

    #[test]
    fn decimal_scaling_is_exact() {
        assert_eq!(scale_decimal("0.067", 3), Some(67.0));
        assert_eq!(scale_decimal("67", 0), Some(67.0));
        assert_eq!(scale_decimal("2.5", -1), Some(0.25));
        assert_eq!(scale_decimal("1.2", 3), Some(1200.0));
        assert_eq!(scale_decimal("500", -3), Some(0.5));
        assert_eq!(scale_decimal("5", -3), Some(0.005));
    }

    #[test]
    fn rule_table() {
        let m = extract_deterministic_text("We measure a 3-dB bandwidth of 67 GHz and a Vπ·L of 2.2 V·cm.");
        assert_eq!(m.bandwidth_3db_ghz, Some(67.0));
        assert_eq!(m.vpi_l_v_cm, Some(2.2));
        assert_eq!(
            m.provenance.get(&MetricField::VpiLVCm),
            Some(&Provenance::Deterministic)
        );
        let m = extract_deterministic_text("The device shows a 0.067 THz 3-dB bandwidth.");
        assert_eq!(m.bandwidth_3db_ghz, Some(67.0));
        let m = extract_deterministic_text("VπL = 25 V·mm; insertion loss below 3.5 dB; 1.2 pJ/bit.");
        assert_eq!(m.vpi_l_v_cm, Some(2.5));
        assert_eq!(m.insertion_loss_db, Some(3.5));
        assert_eq!(m.energy_per_bit_fj, Some(1200.0));
        assert!(extract_deterministic_text("A review of packaging trends.").is_empty());
    }

    fn gateway(p: ScriptedProvider) -> (Gateway, Arc<ScriptedProvider>) {
        let p = Arc::new(p);
        (Gateway::new(p.clone(), RateTable::builtin()), p)
    }

    fn binding() -> ModelRoleBinding {
        ModelRoleBinding::new(Role::Knowledge, "o4-mini")
    }

    #[test]
    fn reasoning_fills_gaps_only() {
        let det = extract_deterministic_text("a 3-dB bandwidth of 67 GHz");
        let (g, _) = gateway(ScriptedProvider::new().push(
            tags::EXTRACTION,
            r#"{"bandwidth_3db_ghz": 10, "energy_per_bit_fj": 45, "insertion_loss_db": "low", "packaging": "flip-chip"}"#,
        ));
        let m = extract_reasoning("excerpt", &det, &g, &binding(), 3);
        assert_eq!(m.bandwidth_3db_ghz, Some(67.0));
        assert_eq!(m.provenance[&MetricField::Bandwidth3dbGhz], Provenance::Deterministic);
        assert_eq!(m.energy_per_bit_fj, Some(45.0));
        assert_eq!(m.provenance[&MetricField::EnergyPerBitFj], Provenance::Reasoning);
        assert_eq!(m.insertion_loss_db, None);
        assert_eq!(m.packaging.as_deref(), Some("flip-chip"));
    }

    #[test]
    fn non_object_retries_then_keeps_deterministic() {
        let det = extract_deterministic_text("insertion loss of 2 dB");
        let (g, p) = gateway(ScriptedProvider::new().always(tags::EXTRACTION, "[1, 2]"));
        let m = extract_reasoning("excerpt", &det, &g, &binding(), 3);
        assert_eq!(m, det);
        assert_eq!(p.calls_for(tags::EXTRACTION), 3);
    }

    #[test]
    fn excerpt_prefers_results() {
        let doc = StructuredDocument {
            title: "t".into(),
            sections: vec![
                super::super::Section {
                    heading: "Fabrication".into(),
                    paragraphs: vec!["etching".into()],
                },
                super::super::Section {
                    heading: "Results".into(),
                    paragraphs: vec!["x".repeat(20_000)],
                },
            ],
            references: vec![],
        };
        let e = select_excerpt("An abstract.", &doc);
        assert!(e.starts_with("An abstract."));
        assert!(!e.contains("etching"));
        assert_eq!(e.chars().count(), EXCERPT_TOKEN_LIMIT * 4);
    }
}
