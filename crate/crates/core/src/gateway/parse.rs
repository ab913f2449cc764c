//! Strict parsers for model replies.
//!
//! Each parser accepts exactly one reply shape and reports anything else as a
//! [`SchemaViolation`], which the gateway treats as retryable. Each also has a
//! renderer producing a canonical reply that parses back to the same value.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

/// Why a reply was rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaViolation(pub String);

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn violation<T>(msg: impl Into<String>) -> Result<T, SchemaViolation> {
    Err(SchemaViolation(msg.into()))
}

/// A confidence value from the five-point set {0, 0.25, 0.5, 0.75, 1}.
/// Stored as the number of quarters so it is exactly comparable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConfidenceScore(u8);

impl ConfidenceScore {
    pub const ZERO: Self = Self(0);
    pub const QUARTER: Self = Self(1);
    pub const HALF: Self = Self(2);
    pub const THREE_QUARTERS: Self = Self(3);
    pub const ONE: Self = Self(4);
    pub const ALL: [Self; 5] = [Self(0), Self(1), Self(2), Self(3), Self(4)];

    /// Accepts only members of the five-point set.
    pub fn new(value: f64) -> Result<Self, SchemaViolation> {
        let q = value * 4.0;
        if value.is_finite() && (0.0..=4.0).contains(&q) && (q - q.round()).abs() < 1e-9 {
            Ok(Self(q.round() as u8))
        } else {
            violation(format!("confidence {value} is not one of 0.0, 0.25, 0.5, 0.75, 1.0"))
        }
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 4.0
    }

    pub fn label(self) -> ConfidenceLabel {
        match self.0 {
            0 | 1 => ConfidenceLabel::Low,
            2 => ConfidenceLabel::Medium,
            _ => ConfidenceLabel::High,
        }
    }
}

impl fmt::Display for ConfidenceScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.0 {
            0 => "0.0",
            1 => "0.25",
            2 => "0.5",
            3 => "0.75",
            _ => "1.0",
        };
        f.write_str(s)
    }
}

impl Serialize for ConfidenceScore {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for ConfidenceScore {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        ConfidenceScore::new(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConfidenceLabel {
    Low,
    Medium,
    High,
}

impl fmt::Display for ConfidenceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConfidenceLabel::Low => "Low",
            ConfidenceLabel::Medium => "Medium",
            ConfidenceLabel::High => "High",
        })
    }
}

/// A confident verdict needs at least this score.
pub const CONFIDENT_AT: ConfidenceScore = ConfidenceScore::THREE_QUARTERS;
pub const MAX_REASONING_WORDS: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceVerdict {
    pub confidence_score: ConfidenceScore,
    pub confident: bool,
    pub reasoning: String,
}

impl ConfidenceVerdict {
    /// Canonical JSON reply for this verdict.
    pub fn to_reply(&self) -> String {
        serde_json::to_string(self).expect("verdict serializes")
    }
}

pub fn render_relevance(relevant: bool) -> String {
    if relevant { "Relevant: Yes" } else { "Relevant: No" }.to_string()
}

/// `"Relevant: Yes"` or `"Relevant: No"`, surrounding whitespace tolerated.
pub fn parse_relevance(reply: &str) -> Result<bool, SchemaViolation> {
    match reply.trim() {
        "Relevant: Yes" => Ok(true),
        "Relevant: No" => Ok(false),
        other => violation(format!(
            "expected \"Relevant: Yes\" or \"Relevant: No\", got {:?}",
            clip(other)
        )),
    }
}

/// A single JSON object with exactly the keys `confidence_score`,
/// `confident` and `reasoning`.
pub fn parse_confidence(reply: &str) -> Result<ConfidenceVerdict, SchemaViolation> {
    let body = strip_fence(reply);
    let value: Value = serde_json::from_str(body).or_else(|e| violation(format!("not a JSON object: {e}")))?;
    let Value::Object(map) = value else {
        return violation("reply is not a JSON object");
    };
    const KEYS: [&str; 3] = ["confidence_score", "confident", "reasoning"];
    if map.len() != KEYS.len() || !KEYS.iter().all(|k| map.contains_key(*k)) {
        let got: Vec<_> = map.keys().cloned().collect();
        return violation(format!("expected exactly keys {KEYS:?}, got {got:?}"));
    }
    let score = map["confidence_score"]
        .as_f64()
        .ok_or_else(|| SchemaViolation("confidence_score must be a number".into()))?;
    let score = ConfidenceScore::new(score)?;
    let confident = map["confident"]
        .as_bool()
        .ok_or_else(|| SchemaViolation("confident must be a boolean".into()))?;
    if confident != (score >= CONFIDENT_AT) {
        return violation(format!("confident={confident} contradicts confidence_score={score}"));
    }
    let reasoning = map["reasoning"]
        .as_str()
        .ok_or_else(|| SchemaViolation("reasoning must be a string".into()))?;
    if reasoning.contains(['\n', '\r']) {
        return violation("reasoning must be a single line");
    }
    let words = reasoning.split_whitespace().count();
    if words > MAX_REASONING_WORDS {
        return violation(format!("reasoning has {words} words, limit {MAX_REASONING_WORDS}"));
    }
    Ok(ConfidenceVerdict {
        confidence_score: score,
        confident,
        reasoning: reasoning.to_string(),
    })
}

/// A single number from the five-point set.
pub fn parse_self_eval(reply: &str) -> Result<ConfidenceScore, SchemaViolation> {
    let t = reply.trim();
    let v: f64 = t
        .parse()
        .or_else(|_| violation(format!("expected a single number, got {:?}", clip(t))))?;
    ConfidenceScore::new(v)
}

pub fn render_self_eval(score: ConfidenceScore) -> String {
    score.to_string()
}

pub const MIN_SUBTOPICS: usize = 2;
pub const MAX_SUBTOPICS: usize = 3;

/// A flat Python list literal of 2–3 distinct, non-empty strings.
pub fn parse_decomposition(reply: &str) -> Result<Vec<String>, SchemaViolation> {
    let items = parse_py_str_list(strip_fence(reply))?;
    if !(MIN_SUBTOPICS..=MAX_SUBTOPICS).contains(&items.len()) {
        return violation(format!("expected 2-3 subtopics, got {}", items.len()));
    }
    for (i, s) in items.iter().enumerate() {
        if s.trim().is_empty() {
            return violation("empty subtopic");
        }
        if items[..i].contains(s) {
            return violation(format!("duplicate subtopic {s:?}"));
        }
    }
    Ok(items)
}

pub fn render_decomposition(items: &[String]) -> String {
    let quoted: Vec<String> = items.iter().map(|s| py_quote(s)).collect();
    format!("[{}]", quoted.join(", "))
}

pub const MIN_TITLE_WORDS: usize = 3;
pub const MAX_TITLE_WORDS: usize = 6;

/// A 3–6 word title on one line; surrounding quotes are dropped.
pub fn parse_title(reply: &str) -> Result<String, SchemaViolation> {
    let t = clean_title(reply);
    if t.contains('\n') {
        return violation("title must be one line");
    }
    let n = t.split_whitespace().count();
    if !(MIN_TITLE_WORDS..=MAX_TITLE_WORDS).contains(&n) {
        return violation(format!("title has {n} words, expected 3-6"));
    }
    Ok(t.split_whitespace().collect::<Vec<_>>().join(" "))
}

pub(crate) fn clean_title(reply: &str) -> String {
    reply
        .trim()
        .trim_matches(|c| c == '"' || c == '\'' || c == '`')
        .trim()
        .to_string()
}

/// `YES` or `NO`, case-insensitive.
pub fn parse_judge(reply: &str) -> Result<bool, SchemaViolation> {
    match reply.trim().trim_end_matches('.').to_ascii_uppercase().as_str() {
        "YES" => Ok(true),
        "NO" => Ok(false),
        other => violation(format!("expected YES or NO, got {:?}", clip(other))),
    }
}

/// Removes a surrounding Markdown code fence, if any.
pub(crate) fn strip_fence(reply: &str) -> &str {
    let t = reply.trim();
    if let Some(inner) = t.strip_prefix("```").and_then(|r| r.strip_suffix("```")) {
        let inner = inner.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
        return inner.trim();
    }
    t
}

fn clip(s: &str) -> String {
    s.chars().take(60).collect()
}

fn py_quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

/// Parses `['a', "b", ...]`; only string items are allowed.
fn parse_py_str_list(src: &str) -> Result<Vec<String>, SchemaViolation> {
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let skip_ws = |i: &mut usize| {
        while *i < chars.len() && chars[*i].is_whitespace() {
            *i += 1;
        }
    };
    skip_ws(&mut i);
    if chars.get(i) != Some(&'[') {
        return violation("expected a list literal starting with '['");
    }
    i += 1;
    let mut items = Vec::new();
    loop {
        skip_ws(&mut i);
        match chars.get(i) {
            Some(']') => {
                i += 1;
                break;
            }
            Some(&q @ ('\'' | '"')) => {
                i += 1;
                let mut s = String::new();
                loop {
                    match chars.get(i) {
                        None => return violation("unterminated string"),
                        Some(&c) if c == q => {
                            i += 1;
                            break;
                        }
                        Some('\n') => return violation("newline inside string"),
                        Some('\\') => {
                            let esc = chars.get(i + 1).copied();
                            s.push(match esc {
                                Some('n') => '\n',
                                Some('t') => '\t',
                                Some('r') => '\r',
                                Some(c @ ('\\' | '\'' | '"')) => c,
                                _ => return violation("unsupported escape"),
                            });
                            i += 2;
                        }
                        Some(&c) => {
                            s.push(c);
                            i += 1;
                        }
                    }
                }
                items.push(s);
                skip_ws(&mut i);
                match chars.get(i) {
                    Some(',') => i += 1,
                    Some(']') => {}
                    _ => return violation("expected ',' or ']' after list item"),
                }
            }
            Some('[') | Some('{') | Some('(') => return violation("nested structures are not allowed"),
            Some(_) => return violation("list items must be quoted strings"),
            None => return violation("unterminated list"),
        }
    }
    skip_ws(&mut i);
    if i != chars.len() {
        return violation("trailing text after list");
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relevance_is_exact() {
        assert_eq!(parse_relevance("Relevant: Yes"), Ok(true));
        assert_eq!(parse_relevance("  Relevant: No\n"), Ok(false));
        assert!(parse_relevance("Yes").is_err());
        assert!(parse_relevance("relevant: yes").is_err());
        assert!(parse_relevance("Relevant: Yes.").is_err());
    }

    #[test]
    fn confidence_examples() {
        let v = parse_confidence(
            r#"{"confidence_score": 0.75, "confident": true, "reasoning": "Context directly addresses key mechanisms; minor gaps are acceptable."}"#,
        )
        .unwrap();
        assert_eq!(v.confidence_score, ConfidenceScore::THREE_QUARTERS);
        assert!(v.confident);
        let v = parse_confidence(
            r#"{"confidence_score": 0.25, "confident": false, "reasoning": "Context is tangential; core details are missing."}"#,
        )
        .unwrap();
        assert!(!v.confident);
    }

    #[test]
    fn confidence_rejections() {
        for bad in [
            r#"{"confidence_score": 0.5, "confident": true, "reasoning": "x"}"#,
            r#"{"confidence_score": 0.3, "confident": false, "reasoning": "x"}"#,
            r#"{"confidence_score": 0.5, "confident": false, "reasoning": "x", "extra": 1}"#,
            r#"{"score": 0.5, "confident": false, "reasoning": "x"}"#,
            r#"{"confidence_score": 0.5, "confident": false, "reasoning": "a\nb"}"#,
            r#"{"confidence_score": "0.5", "confident": false, "reasoning": "x"}"#,
            r#"[0.5]"#,
            "not json",
        ] {
            assert!(parse_confidence(bad).is_err(), "{bad}");
        }
        let long = format!(
            r#"{{"confidence_score": 0.0, "confident": false, "reasoning": "{}"}}"#,
            vec!["word"; 26].join(" ")
        );
        assert!(parse_confidence(&long).is_err());
    }

    #[test]
    fn labels() {
        use ConfidenceLabel::*;
        let labels: Vec<_> = ConfidenceScore::ALL.iter().map(|s| s.label()).collect();
        assert_eq!(labels, vec![Low, Low, Medium, High, High]);
    }

    #[test]
    fn self_eval_values() {
        assert_eq!(parse_self_eval("0.75").unwrap().label(), ConfidenceLabel::High);
        assert_eq!(parse_self_eval(" 0.5 ").unwrap().label(), ConfidenceLabel::Medium);
        assert!(parse_self_eval("0.3").is_err());
        assert!(parse_self_eval("1.25").is_err());
        assert!(parse_self_eval("high").is_err());
    }

    #[test]
    fn decomposition_shapes() {
        assert_eq!(
            parse_decomposition(r#"['Device physics of X', "System impact"]"#).unwrap(),
            vec!["Device physics of X", "System impact"]
        );
        assert!(parse_decomposition("['a', 'b', 'c', 'd']").is_err());
        assert!(parse_decomposition("['a']").is_err());
        assert!(parse_decomposition("['a', 'a']").is_err());
        assert!(parse_decomposition("['a', ['b']]").is_err());
        assert!(parse_decomposition("['a', 2]").is_err());
        assert!(parse_decomposition("['a', '  ']").is_err());
        assert_eq!(parse_decomposition("```python\n['a', 'b',]\n```").unwrap().len(), 2);
    }

    #[test]
    fn title_bounds() {
        assert_eq!(
            parse_title("Thin Film Modulator Design").unwrap(),
            "Thin Film Modulator Design"
        );
        assert!(parse_title("Notes").is_err());
        assert!(parse_title("one two three four five six seven").is_err());
        assert_eq!(parse_title("\"Quoted Title Here\"").unwrap(), "Quoted Title Here");
    }

    #[test]
    fn judge_replies() {
        assert_eq!(parse_judge("YES"), Ok(true));
        assert_eq!(parse_judge("no."), Ok(false));
        assert!(parse_judge("maybe").is_err());
    }

    mod roundtrip {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn decomposition(items in proptest::collection::btree_set("[ -~]{1,20}", 2..=3)) {
                let items: Vec<String> = items.into_iter().filter(|s| !s.trim().is_empty()).collect();
                prop_assume!(items.len() >= 2);
                let parsed = parse_decomposition(&render_decomposition(&items)).unwrap();
                prop_assert_eq!(&parsed, &items);
                prop_assert_eq!(parse_decomposition(&render_decomposition(&parsed)).unwrap(), parsed);
            }

            #[test]
            fn confidence(q in 0u8..5, words in proptest::collection::vec("[a-z]{1,8}", 0..25)) {
                let score = ConfidenceScore::ALL[q as usize];
                let v = ConfidenceVerdict { confidence_score: score, confident: score >= CONFIDENT_AT, reasoning: words.join(" ") };
                prop_assert_eq!(parse_confidence(&v.to_reply()).unwrap(), v);
            }

            #[test]
            fn relevance_and_self_eval(b: bool, q in 0u8..5) {
                prop_assert_eq!(parse_relevance(&render_relevance(b)).unwrap(), b);
                let s = ConfidenceScore::ALL[q as usize];
                prop_assert_eq!(parse_self_eval(&render_self_eval(s)).unwrap(), s);
            }
        }
    }
}
