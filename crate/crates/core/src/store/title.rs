//! Session titles.

use std::sync::Mutex;

use chrono::NaiveDate;

use crate::gateway::{clean_title, parse_title, tags, Gateway, ModelRoleBinding, MAX_TITLE_WORDS};

pub fn fallback_title(date: NaiveDate) -> String {
    format!("Untitled Session {}", date.format("%Y-%m-%d"))
}

/// Asks the fast model for a 3–6 word title. When every attempt is out of
/// range, an over-long last reply is cut to six words; anything else falls
/// back to `Untitled Session <date>`.
pub fn title_session(
    first_exchange: &str,
    gateway: &Gateway,
    binding: &ModelRoleBinding,
    budget: u32,
    today: NaiveDate,
) -> String {
    if first_exchange.trim().is_empty() {
        return fallback_title(today);
    }
    let last = Mutex::new(None::<String>);
    let parser = |reply: &str| {
        *last.lock().unwrap_or_else(|p| p.into_inner()) = Some(reply.to_string());
        parse_title(reply)
    };
    let vars = crate::bindings! { "question" => first_exchange };
    match gateway.ask(tags::TITLE, binding, vars, parser, budget) {
        Ok(done) => done.value,
        Err(e) => {
            let last = last.into_inner().unwrap_or_else(|p| p.into_inner()).unwrap_or_default();
            let cleaned = clean_title(&last);
            let words: Vec<&str> = cleaned.split_whitespace().collect();
            if words.len() > MAX_TITLE_WORDS && !cleaned.contains('\n') {
                words[..MAX_TITLE_WORDS].join(" ")
            } else {
                tracing::warn!(error = %e, "title generation failed; using fallback title");
                fallback_title(today)
            }
        }
    }
}
