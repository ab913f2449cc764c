//! Latency, cost and token aggregates with nearest-rank percentiles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EvalError, RunRecord};

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(p/100 · n)` (at least 1).
pub fn nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            mean: v.iter().sum::<f64>() / v.len().max(1) as f64,
            p50: nearest_rank(&v, 50.0)?,
            p90: nearest_rank(&v, 90.0)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencySummary {
    /// Successful runs the statistics cover.
    pub runs: usize,
    /// Failed runs, excluded from the statistics.
    pub failed: usize,
    pub latency_s: Stat,
    pub cost_usd: Stat,
    pub token_in: Stat,
    pub token_out: Stat,
}

/// Mean, P50 and P90 over successful runs.
pub fn aggregate_efficiency(records: &[RunRecord]) -> Result<EfficiencySummary, EvalError> {
    let ok: Vec<&RunRecord> = records.iter().filter(|r| !r.failed).collect();
    let failed = records.len() - ok.len();
    let col = |f: fn(&RunRecord) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<_>>();
    let stat = |f| Stat::of(&col(f)).ok_or_else(|| EvalError::Undefined("no successful runs".into()));
    Ok(EfficiencySummary {
        runs: ok.len(),
        failed,
        latency_s: stat(|r| r.latency_s)?,
        cost_usd: stat(|r| r.cost_usd)?,
        token_in: stat(|r| r.token_in as f64)?,
        token_out: stat(|r| r.token_out as f64)?,
    })
}

/// [`aggregate_efficiency`] per group key; groups with no successful run
/// are left out.
pub fn aggregate_by(records: &[RunRecord], key: impl Fn(&RunRecord) -> String) -> BTreeMap<String, EfficiencySummary> {
    let mut groups: BTreeMap<String, Vec<RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(key(r)).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .filter_map(|(k, rs)| aggregate_efficiency(&rs).ok().map(|s| (k, s)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_hand_counts() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 50.0), Some(5.0));
        assert_eq!(nearest_rank(&v, 90.0), Some(9.0));
        assert_eq!(nearest_rank(&[7.0], 90.0), Some(7.0));
        assert_eq!(nearest_rank(&[], 50.0), None);
        let s = Stat::of(&[3.0]).unwrap();
        assert_eq!((s.mean, s.p50, s.p90), (3.0, 3.0, 3.0));
    }
}
