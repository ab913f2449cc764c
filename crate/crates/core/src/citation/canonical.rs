//! Canonical source identity: DOI, ISBN or a hash of the normalized URL.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha1::{Digest, Sha1};

use super::CitationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdKind {
    Doi,
    Isbn,
    Urlhash,
}

impl IdKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IdKind::Doi => "doi",
            IdKind::Isbn => "isbn",
            IdKind::Urlhash => "urlhash",
        }
    }
}

/// Normalized identity of a source document.
///
/// Ordering is the lexical order of the rendered `kind:value` form, which is
/// the tie-break order used by retrieval and citation trimming.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalId {
    kind: IdKind,
    value: String,
}

impl CanonicalId {
    pub fn kind(&self) -> IdKind {
        self.kind
    }

    pub fn value(&self) -> &str {
        &self.value
    }

    /// Builds a DOI identity, stripping resolver prefixes and case-folding.
    pub fn doi(raw: &str) -> Result<Self, CitationError> {
        normalize_doi(raw)
            .map(|value| Self {
                kind: IdKind::Doi,
                value,
            })
            .ok_or_else(|| CitationError::InvalidIdentifier(format!("doi:{raw}")))
    }

    /// Builds an ISBN identity. ISBN-10 inputs are converted to ISBN-13.
    pub fn isbn(raw: &str) -> Result<Self, CitationError> {
        normalize_isbn(raw)
            .map(|value| Self {
                kind: IdKind::Isbn,
                value,
            })
            .ok_or_else(|| CitationError::InvalidIdentifier(format!("isbn:{raw}")))
    }

    /// Hashes the normalized form of `raw` with SHA-1.
    pub fn url(raw: &str) -> Result<Self, CitationError> {
        let normalized = normalize_url(raw).ok_or_else(|| CitationError::InvalidIdentifier(format!("url:{raw}")))?;
        Ok(Self {
            kind: IdKind::Urlhash,
            value: sha1_hex(normalized.as_bytes()),
        })
    }

    /// Accepts an already-computed url hash (40 lowercase hex digits).
    pub fn urlhash(hex: &str) -> Result<Self, CitationError> {
        let hex = hex.trim().to_ascii_lowercase();
        if hex.len() == 40 && hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            Ok(Self {
                kind: IdKind::Urlhash,
                value: hex,
            })
        } else {
            Err(CitationError::InvalidIdentifier(format!("urlhash:{hex}")))
        }
    }

    /// Parses the rendered `kind:value` form, normalizing the value.
    pub fn parse(rendered: &str) -> Result<Self, CitationError> {
        let rendered = rendered.trim();
        let (kind, value) = rendered
            .split_once(':')
            .ok_or_else(|| CitationError::InvalidIdentifier(rendered.to_string()))?;
        match kind.trim().to_ascii_lowercase().as_str() {
            "doi" => Self::doi(value),
            "isbn" => Self::isbn(value),
            "urlhash" => Self::urlhash(value),
            _ => Err(CitationError::InvalidIdentifier(rendered.to_string())),
        }
    }
}

impl fmt::Display for CanonicalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.value)
    }
}

impl FromStr for CanonicalId {
    type Err = CitationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for CanonicalId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CanonicalId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// A reference as it appears in the wild, before canonicalization.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawReference {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isbn: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

/// Resolves a raw reference to its canonical identity with priority
/// doi > isbn > urlhash. Identifiers that fail to normalize fall through to
/// the next kind.
pub fn canonicalize(source: &RawReference) -> Result<CanonicalId, CitationError> {
    fn present(f: &Option<String>) -> Option<&str> {
        f.as_deref().map(str::trim).filter(|s| !s.is_empty())
    }
    if let Some(id) = present(&source.doi).and_then(|d| CanonicalId::doi(d).ok()) {
        return Ok(id);
    }
    if let Some(id) = present(&source.isbn).and_then(|i| CanonicalId::isbn(i).ok()) {
        return Ok(id);
    }
    if let Some(id) = present(&source.url).and_then(|u| CanonicalId::url(u).ok()) {
        return Ok(id);
    }
    Err(CitationError::Uncitable {
        title: source.title.clone().unwrap_or_default(),
    })
}

const DOI_PREFIXES: [&str; 6] = [
    "https://doi.org/",
    "http://doi.org/",
    "https://dx.doi.org/",
    "http://dx.doi.org/",
    "doi.org/",
    "doi:",
];

fn normalize_doi(raw: &str) -> Option<String> {
    let mut s = raw.trim().to_lowercase();
    loop {
        let before = s.len();
        for prefix in DOI_PREFIXES {
            if let Some(rest) = s.strip_prefix(prefix) {
                s = rest.trim_start().to_string();
            }
        }
        if s.len() == before {
            break;
        }
    }
    let s = s.trim().trim_end_matches(['.', ',', ';']).to_string();
    (s.starts_with("10.") && s.contains('/') && !s.contains(char::is_whitespace)).then_some(s)
}

fn normalize_isbn(raw: &str) -> Option<String> {
    let cleaned: String = raw
        .trim()
        .trim_start_matches(|c: char| c.is_ascii_alphabetic() || c == ':' || c == ' ')
        .chars()
        .filter(|c| c.is_ascii_digit() || *c == 'x' || *c == 'X')
        .map(|c| c.to_ascii_uppercase())
        .collect();
    match cleaned.len() {
        13 if cleaned.bytes().all(|b| b.is_ascii_digit()) => {
            (isbn13_check(&cleaned[..12]) == cleaned.as_bytes()[12] - b'0').then_some(cleaned)
        }
        10 => {
            let body = &cleaned[..9];
            if !body.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            let expected = isbn10_check(body);
            let actual = cleaned.as_bytes()[9];
            if actual != expected {
                return None;
            }
            let stem = format!("978{body}");
            let check = isbn13_check(&stem);
            Some(format!("{stem}{check}"))
        }
        _ => None,
    }
}

fn isbn10_check(body: &str) -> u8 {
    let sum: u32 = body
        .bytes()
        .enumerate()
        .map(|(i, b)| (10 - i as u32) * u32::from(b - b'0'))
        .sum();
    match (11 - sum % 11) % 11 {
        10 => b'X',
        d => b'0' + d as u8,
    }
}

fn isbn13_check(stem: &str) -> u8 {
    let sum: u32 = stem
        .bytes()
        .enumerate()
        .map(|(i, b)| u32::from(b - b'0') * if i % 2 == 0 { 1 } else { 3 })
        .sum();
    ((10 - sum % 10) % 10) as u8
}

/// Lowercases scheme and host, drops default ports, fragments and a trailing
/// slash on non-root paths.
pub(crate) fn normalize_url(raw: &str) -> Option<String> {
    let raw = raw.trim();
    let with_scheme = if raw.contains("://") {
        raw.to_string()
    } else {
        format!("https://{raw}")
    };
    let mut url = url::Url::parse(&with_scheme).ok()?;
    url.host_str()?;
    url.set_fragment(None);
    let path = url.path().to_string();
    if path.len() > 1 && path.ends_with('/') {
        url.set_path(path.trim_end_matches('/'));
    }
    let mut out = url.to_string();
    if url.path() == "/" && url.query().is_none() && out.ends_with('/') {
        out.pop();
    }
    Some(out)
}

pub(crate) fn sha1_hex(bytes: &[u8]) -> String {
    let digest = Sha1::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(doi: Option<&str>, isbn: Option<&str>, url: Option<&str>) -> RawReference {
        RawReference {
            doi: doi.map(String::from),
            isbn: isbn.map(String::from),
            url: url.map(String::from),
            title: Some("t".into()),
        }
    }

    #[test]
    fn doi_prefix_is_stripped_and_case_folded() {
        let id = canonicalize(&raw(Some("https://doi.org/10.1364/ABC.12.345"), None, None)).unwrap();
        assert_eq!(id.kind(), IdKind::Doi);
        assert_eq!(id.value(), "10.1364/abc.12.345");
        assert_eq!(id.to_string(), "doi:10.1364/abc.12.345");
    }

    #[test]
    fn url_hash_is_deterministic_and_normalized() {
        let a = canonicalize(&raw(None, None, Some("https://Example.org/paper/#sec2"))).unwrap();
        let b = canonicalize(&raw(None, None, Some("https://example.org/paper"))).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.kind(), IdKind::Urlhash);
        assert_eq!(a.value().len(), 40);
    }

    #[test]
    fn title_only_is_uncitable() {
        let err = canonicalize(&RawReference {
            title: Some("Some Paper".into()),
            ..Default::default()
        })
        .unwrap_err();
        assert!(matches!(err, CitationError::Uncitable { .. }));
    }

    #[test]
    fn priority_doi_over_isbn_over_url() {
        let id = canonicalize(&raw(Some("10.1/x"), Some("0306406152"), Some("a.org"))).unwrap();
        assert_eq!(id.kind(), IdKind::Doi);
        let id = canonicalize(&raw(None, Some("0306406152"), Some("a.org"))).unwrap();
        assert_eq!(id.kind(), IdKind::Isbn);
        // a bad DOI falls through
        let id = canonicalize(&raw(Some("not a doi"), None, Some("a.org"))).unwrap();
        assert_eq!(id.kind(), IdKind::Urlhash);
    }

    #[test]
    fn isbn10_is_upgraded_to_13() {
        let id = CanonicalId::isbn("0-306-40615-2").unwrap();
        assert_eq!(id.value(), "9780306406157");
        assert_eq!(CanonicalId::isbn("978-0-306-40615-7").unwrap(), id);
        assert!(CanonicalId::isbn("0-306-40615-3").is_err());
    }

    #[test]
    fn rendered_form_round_trips() {
        for s in ["doi:10.1364/oe.1", "isbn:9780306406157"] {
            let id: CanonicalId = s.parse().unwrap();
            assert_eq!(id.to_string(), s);
        }
        let u = CanonicalId::url("x.org/a").unwrap();
        assert_eq!(CanonicalId::parse(&u.to_string()).unwrap(), u);
    }

    #[test]
    fn ordering_matches_rendered_lexical_order() {
        let mut ids = [
            CanonicalId::url("b.org").unwrap(),
            CanonicalId::doi("10.2/b").unwrap(),
            CanonicalId::isbn("0306406152").unwrap(),
            CanonicalId::doi("10.1/a").unwrap(),
        ];
        let mut rendered: Vec<String> = ids.iter().map(ToString::to_string).collect();
        ids.sort();
        rendered.sort();
        assert_eq!(ids.iter().map(ToString::to_string).collect::<Vec<_>>(), rendered);
    }
}
