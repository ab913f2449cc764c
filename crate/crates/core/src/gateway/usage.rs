//! Token accounting and the per-model rate table.

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CompletionUsage {
    pub token_in: u64,
    pub token_out: u64,
    pub cost_usd: f64,
}

impl Add for CompletionUsage {
    type Output = CompletionUsage;

    fn add(self, rhs: Self) -> Self {
        Self {
            token_in: self.token_in + rhs.token_in,
            token_out: self.token_out + rhs.token_out,
            cost_usd: self.cost_usd + rhs.cost_usd,
        }
    }
}

impl AddAssign for CompletionUsage {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for CompletionUsage {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Rough token count used when a backend does not report usage:
/// one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Prices in USD per 1,000 tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelRate {
    pub rate_in: f64,
    pub rate_out: f64,
    /// Whether the model accepts a reasoning-effort parameter.
    #[serde(default)]
    pub reasoning_effort: bool,
}

/// `model_id → rates`, loaded from TOML:
///
/// ```toml
/// [models."o4-mini"]
/// rate_in = 0.0011
/// rate_out = 0.0044
/// reasoning_effort = true
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    #[serde(default)]
    pub models: BTreeMap<String, ModelRate>,
}

impl RateTable {
    pub fn from_toml(text: &str) -> Result<Self, GatewayError> {
        let table: RateTable = toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
        for (id, r) in &table.models {
            if !(r.rate_in >= 0.0 && r.rate_out >= 0.0) {
                return Err(GatewayError::Config(format!("negative or NaN rate for {id}")));
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Illustrative defaults for the model ids used in the examples.
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN_RATES).expect("builtin rate table parses")
    }

    pub fn get(&self, model_id: &str) -> Option<&ModelRate> {
        self.models.get(model_id)
    }

    pub fn supports_reasoning_effort(&self, model_id: &str) -> bool {
        self.get(model_id).is_some_and(|r| r.reasoning_effort)
    }

    /// Usage for one call. Unknown models are priced at zero.
    pub fn usage(&self, model_id: &str, token_in: u64, token_out: u64) -> CompletionUsage {
        let (rin, rout) = self.get(model_id).map_or((0.0, 0.0), |r| (r.rate_in, r.rate_out));
        CompletionUsage {
            token_in,
            token_out,
            cost_usd: token_in as f64 * rin / 1000.0 + token_out as f64 * rout / 1000.0,
        }
    }
}

const BUILTIN_RATES: &str = r#"
[models."gpt-4o-mini"]
rate_in = 0.00015
rate_out = 0.0006

[models."o4-mini"]
rate_in = 0.0011
rate_out = 0.0044
reasoning_effort = true

[models."o3"]
rate_in = 0.002
rate_out = 0.008
reasoning_effort = true
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_is_per_thousand_tokens() {
        let t = RateTable::from_toml("[models.m]\nrate_in = 1.0\nrate_out = 2.0\n").unwrap();
        let u = t.usage("m", 500, 250);
        assert_eq!(u.cost_usd, 0.5 + 0.5);
        assert_eq!(t.usage("unknown", 10, 10).cost_usd, 0.0);
        assert!(!t.supports_reasoning_effort("m"));
    }

    #[test]
    fn usage_sums() {
        let a = CompletionUsage {
            token_in: 1,
            token_out: 2,
            cost_usd: 0.25,
        };
        let b = CompletionUsage {
            token_in: 3,
            token_out: 4,
            cost_usd: 0.5,
        };
        assert_eq!(
            [a, b].into_iter().sum::<CompletionUsage>(),
            CompletionUsage {
                token_in: 4,
                token_out: 6,
                cost_usd: 0.75
            }
        );
    }

    #[test]
    fn estimates_round_up() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcde"), 2);
        assert_eq!(estimate_tokens("abcd"), 1);
    }

    #[test]
    fn builtin_flags_effort_models() {
        let t = RateTable::builtin();
        assert!(t.supports_reasoning_effort("o4-mini"));
        assert!(!t.supports_reasoning_effort("gpt-4o-mini"));
    }
}
