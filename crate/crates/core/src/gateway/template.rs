//! Prompt templates with named placeholders.
//!
//! Placeholders are `{name}` or `{name:.Nf}` (fixed-point with N decimals);
//! `{{` and `}}` produce literal braces. Rendering is strict: any placeholder
//! without a binding is an error.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{GatewayError, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BindingValue {
    Number(f64),
    Text(String),
}

impl fmt::Display for BindingValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BindingValue::Number(n) => write!(f, "{n}"),
            BindingValue::Text(t) => f.write_str(t),
        }
    }
}

impl BindingValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            BindingValue::Number(n) => Some(*n),
            BindingValue::Text(t) => t.trim().parse().ok(),
        }
    }

    pub fn as_text(&self) -> String {
        self.to_string()
    }
}

impl From<f64> for BindingValue {
    fn from(v: f64) -> Self {
        BindingValue::Number(v)
    }
}

impl From<&str> for BindingValue {
    fn from(v: &str) -> Self {
        BindingValue::Text(v.to_string())
    }
}

impl From<String> for BindingValue {
    fn from(v: String) -> Self {
        BindingValue::Text(v)
    }
}

pub type Bindings = BTreeMap<String, BindingValue>;

/// Builds a [`Bindings`] map from `name => value` pairs.
#[macro_export]
macro_rules! bindings {
    ($($k:expr => $v:expr),* $(,)?) => {{
        let mut m = $crate::gateway::Bindings::new();
        $( m.insert($k.to_string(), $crate::gateway::BindingValue::from($v)); )*
        m
    }};
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub role: Role,
    pub state_tag: String,
    /// Role-segmented system text; rendered with the same bindings.
    pub system: String,
    pub body: String,
}

/// A rendered prompt ready to send.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

impl PromptTemplate {
    pub fn new(role: Role, state_tag: &str, system: &str, body: &str) -> Self {
        Self {
            role,
            state_tag: state_tag.into(),
            system: system.into(),
            body: body.into(),
        }
    }

    pub fn render(&self, bindings: &Bindings) -> Result<RenderedPrompt, GatewayError> {
        Ok(RenderedPrompt {
            system: render(&self.system, bindings)?,
            user: render(&self.body, bindings)?,
        })
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let mut out = Vec::new();
        for text in [&self.system, &self.body] {
            let _ = walk(text, &mut |name, _| {
                if !out.iter().any(|n| n == name) {
                    out.push(name.to_string());
                }
                Ok(String::new())
            });
        }
        out
    }
}

/// Renders a single template string.
pub fn render(template: &str, bindings: &Bindings) -> Result<String, GatewayError> {
    walk(template, &mut |name, spec| {
        let value = bindings
            .get(name)
            .ok_or_else(|| GatewayError::Render(format!("unbound placeholder {{{name}}}")))?;
        match spec {
            None => Ok(value.as_text()),
            Some(spec) => {
                let decimals = parse_fixed_spec(spec)
                    .ok_or_else(|| GatewayError::Render(format!("unsupported format spec {spec:?} for {{{name}}}")))?;
                let n = value
                    .as_f64()
                    .ok_or_else(|| GatewayError::Render(format!("placeholder {{{name}}} is not numeric")))?;
                Ok(format!("{n:.decimals$}"))
            }
        }
    })
}

fn parse_fixed_spec(spec: &str) -> Option<usize> {
    spec.strip_prefix('.')?.strip_suffix('f')?.parse().ok()
}

/// Called with `(name, format spec)` for each placeholder.
type PlaceholderFn<'a> = dyn FnMut(&str, Option<&str>) -> Result<String, GatewayError> + 'a;

fn walk(template: &str, on_placeholder: &mut PlaceholderFn<'_>) -> Result<String, GatewayError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(i) = rest.find(['{', '}']) {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if let Some(after) = tail.strip_prefix("{{") {
            out.push('{');
            rest = after;
        } else if let Some(after) = tail.strip_prefix("}}") {
            out.push('}');
            rest = after;
        } else if tail.starts_with('}') {
            return Err(GatewayError::Render("unmatched '}' in template".into()));
        } else {
            let close = tail
                .find('}')
                .ok_or_else(|| GatewayError::Render("unterminated placeholder".into()))?;
            let inner = &tail[1..close];
            let (name, spec) = match inner.split_once(':') {
                Some((n, s)) => (n.trim(), Some(s.trim())),
                None => (inner.trim(), None),
            };
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(GatewayError::Render(format!("invalid placeholder {{{inner}}}")));
            }
            out.push_str(&on_placeholder(name, spec)?);
            rest = &tail[close + 1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_fixed_point() {
        let b = crate::bindings! { "sim_score" => 0.8215, "question" => "Why?" };
        let s = render("Q: {question} sim={sim_score:.2f}", &b).unwrap();
        assert_eq!(s, "Q: Why? sim=0.82");
    }

    #[test]
    fn unbound_placeholder_is_named() {
        let err = render("Q: {question}", &Bindings::new()).unwrap_err();
        assert!(err.to_string().contains("{question}"));
    }

    #[test]
    fn braces_escape() {
        let b = crate::bindings! { "x" => "1" };
        assert_eq!(render("{{\"k\": {x}}}", &b).unwrap(), "{\"k\": 1}");
        assert!(render("a } b", &b).is_err());
    }

    #[test]
    fn deterministic_bytes() {
        let t = PromptTemplate::new(
            Role::Relevance,
            "relevance",
            "sys {question}",
            "{question} {sim_score:.2f}",
        );
        let b = crate::bindings! { "sim_score" => 0.5, "question" => "q" };
        assert_eq!(t.render(&b).unwrap(), t.render(&b).unwrap());
        assert_eq!(t.placeholders(), vec!["question", "sim_score"]);
    }

    #[test]
    fn text_numbers_can_be_formatted() {
        let b = crate::bindings! { "v" => "0.14" };
        assert_eq!(render("{v:.1f}", &b).unwrap(), "0.1");
        let b = crate::bindings! { "v" => "abc" };
        assert!(render("{v:.1f}", &b).is_err());
    }
}
