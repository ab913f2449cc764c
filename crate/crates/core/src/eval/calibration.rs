//! Calibration metrics: ECE, risk–coverage / AURC, and isotonic recalibration.

use serde::{Deserialize, Serialize};

use super::EvalError;

pub const DEFAULT_ECE_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub mean_confidence: f64,
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskCoveragePoint {
    pub coverage: f64,
    pub risk: f64,
}

fn check(records: &[(f64, bool)]) -> Result<(), EvalError> {
    if records.is_empty() {
        return Err(EvalError::Undefined("no records".into()));
    }
    if let Some((c, _)) = records.iter().find(|(c, _)| !(0.0..=1.0).contains(c)) {
        return Err(EvalError::Invalid(format!("confidence {c} outside [0, 1]")));
    }
    Ok(())
}

fn bin_of(confidence: f64, bins: usize) -> usize {
    ((confidence * bins as f64).floor() as usize).min(bins - 1)
}

/// Equal-width bins over [0, 1]; a confidence of exactly 1.0 falls in the
/// last bin. Empty bins are included with `count = 0`.
pub fn reliability_bins(records: &[(f64, bool)], bins: usize) -> Result<Vec<CalibrationBin>, EvalError> {
    check(records)?;
    if bins == 0 {
        return Err(EvalError::Invalid("bin count must be positive".into()));
    }
    let mut sums = vec![(0.0f64, 0usize, 0usize); bins];
    for &(c, ok) in records {
        let s = &mut sums[bin_of(c, bins)];
        s.0 += c;
        s.1 += ok as usize;
        s.2 += 1;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(b, (conf, correct, n))| CalibrationBin {
            lo: b as f64 / bins as f64,
            hi: (b + 1) as f64 / bins as f64,
            mean_confidence: if n > 0 { conf / n as f64 } else { 0.0 },
            accuracy: if n > 0 { correct as f64 / n as f64 } else { 0.0 },
            count: n,
        })
        .collect())
}

/// Count-weighted mean gap between confidence and accuracy per bin.
pub fn compute_ece(records: &[(f64, bool)], bins: usize) -> Result<f64, EvalError> {
    let n = records.len() as f64;
    Ok(reliability_bins(records, bins)?
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| b.count as f64 / n * (b.mean_confidence - b.accuracy).abs())
        .sum())
}

/// Prefix curve after sorting by confidence, highest first (ties keep
/// input order).
pub fn risk_coverage_curve(records: &[(f64, bool)]) -> Result<Vec<RiskCoveragePoint>, EvalError> {
    check(records)?;
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[b].0.total_cmp(&records[a].0));
    let n = records.len() as f64;
    let mut errors = 0usize;
    Ok(order
        .iter()
        .enumerate()
        .map(|(i, &idx)| {
            errors += (!records[idx].1) as usize;
            let k = (i + 1) as f64;
            RiskCoveragePoint {
                coverage: k / n,
                risk: errors as f64 / k,
            }
        })
        .collect())
}

/// Trapezoid area under the risk–coverage curve, between its first and
/// last points. Lower is better.
pub fn compute_aurc(records: &[(f64, bool)]) -> Result<f64, EvalError> {
    let curve = risk_coverage_curve(records)?;
    Ok(curve
        .windows(2)
        .map(|w| (w[1].coverage - w[0].coverage) * (w[0].risk + w[1].risk) / 2.0)
        .sum())
}

/// Non-decreasing step mapping fitted by pool-adjacent-violators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicMap {
    /// `(lowest confidence in block, fitted value)`, ascending.
    pub blocks: Vec<(f64, f64)>,
}

impl IsotonicMap {
    /// Value of the last block starting at or below `confidence`; values
    /// below the first block map to the first block.
    pub fn apply(&self, confidence: f64) -> f64 {
        let i = self.blocks.partition_point(|(lo, _)| *lo <= confidence);
        self.blocks[i.saturating_sub(1)].1
    }

    pub fn apply_all(&self, records: &[(f64, bool)]) -> Vec<(f64, bool)> {
        records.iter().map(|&(c, ok)| (self.apply(c), ok)).collect()
    }
}

/// Fits correctness against confidence. Equal confidences are pooled first,
/// so a single distinct confidence gives a constant map at the overall
/// accuracy.
pub fn isotonic_calibrate(records: &[(f64, bool)]) -> Result<IsotonicMap, EvalError> {
    check(records)?;
    if records.len() < 2 {
        return Err(EvalError::Undefined("isotonic fit needs at least two records".into()));
    }
    let mut sorted: Vec<(f64, bool)> = records.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // (lo, sum of correctness, weight)
    let mut blocks: Vec<(f64, f64, f64)> = Vec::new();
    for (c, ok) in sorted {
        let y = if ok { 1.0 } else { 0.0 };
        match blocks.last_mut() {
            Some(last) if last.0 == c => {
                last.1 += y;
                last.2 += 1.0;
            }
            _ => blocks.push((c, y, 1.0)),
        }
        while blocks.len() >= 2 {
            let n = blocks.len();
            let (a, b) = (blocks[n - 2], blocks[n - 1]);
            if a.1 / a.2 <= b.1 / b.2 {
                break;
            }
            blocks.truncate(n - 2);
            blocks.push((a.0, a.1 + b.1, a.2 + b.2));
        }
    }
    Ok(IsotonicMap {
        blocks: blocks.into_iter().map(|(lo, s, w)| (lo, s / w)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ece_hand_cases() {
        assert_eq!(compute_ece(&[(1.0, true), (1.0, false)], 10).unwrap(), 0.5);
        let perfect: Vec<(f64, bool)> = (0..10).map(|i| (0.8, i < 8)).collect();
        assert!(compute_ece(&perfect, 10).unwrap() < 1e-9);
        assert!(matches!(compute_ece(&[], 10), Err(EvalError::Undefined(_))));
        assert!(compute_ece(&[(1.2, true)], 10).is_err());
    }

    #[test]
    fn aurc_hand_cases() {
        assert_eq!(compute_aurc(&[(0.9, true), (0.1, false)]).unwrap(), 0.125);
        assert_eq!(compute_aurc(&[(0.3, true), (0.2, true), (0.9, true)]).unwrap(), 0.0);
        let good = compute_aurc(&[(0.9, true), (0.5, true), (0.1, false)]).unwrap();
        let bad = compute_aurc(&[(0.1, true), (0.5, true), (0.9, false)]).unwrap();
        assert!(bad >= good);
    }

    #[test]
    fn pava_cases() {
        let m = isotonic_calibrate(&[(0.9, false), (0.1, true)]).unwrap();
        assert_eq!(m.blocks, vec![(0.1, 0.5)]);
        assert_eq!(m.apply(0.95), 0.5);
        let mono = isotonic_calibrate(&[(0.2, false), (0.5, false), (0.5, true), (0.9, true)]).unwrap();
        assert_eq!(mono.blocks, vec![(0.2, 0.0), (0.5, 0.5), (0.9, 1.0)]);
        let flat = isotonic_calibrate(&[(0.7, true), (0.7, false), (0.7, true), (0.7, true)]).unwrap();
        assert_eq!(flat.blocks, vec![(0.7, 0.75)]);
        assert!(isotonic_calibrate(&[(0.5, true)]).is_err());
    }

    #[test]
    fn pava_lowers_ece_on_overconfident_set() {
        let recs: Vec<(f64, bool)> = (0..100).map(|i| (0.5 + (i % 5) as f64 * 0.1, i % 3 == 0)).collect();
        let m = isotonic_calibrate(&recs).unwrap();
        let pre = compute_ece(&recs, 10).unwrap();
        let post = compute_ece(&m.apply_all(&recs), 10).unwrap();
        assert!(post < pre);
        assert!(m.blocks.windows(2).all(|w| w[0].1 <= w[1].1));
    }
}
