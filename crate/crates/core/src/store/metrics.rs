//! Device-metrics table keyed by canonical DOI.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::{write_atomic, StoreError};
use crate::citation::CanonicalId;

/// Which extraction pass produced a value. Deterministic values win.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Deterministic,
    Reasoning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricField {
    #[serde(rename = "bandwidth_3db_ghz")]
    Bandwidth3dbGhz,
    VpiLVCm,
    InsertionLossDb,
    EnergyPerBitFj,
    Packaging,
}

impl MetricField {
    pub const ALL: [MetricField; 5] = [
        MetricField::Bandwidth3dbGhz,
        MetricField::VpiLVCm,
        MetricField::InsertionLossDb,
        MetricField::EnergyPerBitFj,
        MetricField::Packaging,
    ];
    pub const NUMERIC: [MetricField; 4] = [
        MetricField::Bandwidth3dbGhz,
        MetricField::VpiLVCm,
        MetricField::InsertionLossDb,
        MetricField::EnergyPerBitFj,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricField::Bandwidth3dbGhz => "bandwidth_3db_ghz",
            MetricField::VpiLVCm => "vpi_l_v_cm",
            MetricField::InsertionLossDb => "insertion_loss_db",
            MetricField::EnergyPerBitFj => "energy_per_bit_fj",
            MetricField::Packaging => "packaging",
        }
    }

    pub fn is_numeric(self) -> bool {
        self != MetricField::Packaging
    }
}

impl fmt::Display for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricField {
    type Err = StoreError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| StoreError::UnknownField(s.to_string()))
    }
}

/// Optimization direction of one Pareto axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Min,
    Max,
}

impl FromStr for Sense {
    type Err = StoreError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "min" => Ok(Sense::Min),
            "max" => Ok(Sense::Max),
            other => Err(StoreError::Validation(format!(
                "sense must be min or max, got {other:?}"
            ))),
        }
    }
}

/// A (possibly partial) set of extracted metric values with per-field provenance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub bandwidth_3db_ghz: Option<f64>,
    pub vpi_l_v_cm: Option<f64>,
    pub insertion_loss_db: Option<f64>,
    pub energy_per_bit_fj: Option<f64>,
    pub packaging: Option<String>,
    #[serde(default)]
    pub provenance: BTreeMap<MetricField, Provenance>,
}

impl MetricValues {
    pub fn number(&self, field: MetricField) -> Option<f64> {
        match field {
            MetricField::Bandwidth3dbGhz => self.bandwidth_3db_ghz,
            MetricField::VpiLVCm => self.vpi_l_v_cm,
            MetricField::InsertionLossDb => self.insertion_loss_db,
            MetricField::EnergyPerBitFj => self.energy_per_bit_fj,
            MetricField::Packaging => None,
        }
    }

    fn number_mut(&mut self, field: MetricField) -> Option<&mut Option<f64>> {
        match field {
            MetricField::Bandwidth3dbGhz => Some(&mut self.bandwidth_3db_ghz),
            MetricField::VpiLVCm => Some(&mut self.vpi_l_v_cm),
            MetricField::InsertionLossDb => Some(&mut self.insertion_loss_db),
            MetricField::EnergyPerBitFj => Some(&mut self.energy_per_bit_fj),
            MetricField::Packaging => None,
        }
    }

    pub fn is_present(&self, field: MetricField) -> bool {
        match field {
            MetricField::Packaging => self.packaging.is_some(),
            f => self.number(f).is_some(),
        }
    }

    pub fn set_number(&mut self, field: MetricField, value: f64, provenance: Provenance) {
        if let Some(slot) = self.number_mut(field) {
            *slot = Some(value);
            self.provenance.insert(field, provenance);
        }
    }

    pub fn set_packaging(&mut self, value: impl Into<String>, provenance: Provenance) {
        self.packaging = Some(value.into());
        self.provenance.insert(MetricField::Packaging, provenance);
    }

    pub fn present_fields(&self) -> Vec<MetricField> {
        MetricField::ALL.into_iter().filter(|f| self.is_present(*f)).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.present_fields().is_empty()
    }

    fn provenance_of(&self, field: MetricField) -> Provenance {
        self.provenance
            .get(&field)
            .copied()
            .unwrap_or(Provenance::Deterministic)
    }

    /// Copies every present field of `incoming` over `self`, except that a
    /// reasoning value never replaces a deterministic one.
    pub fn merge_from(&mut self, incoming: &MetricValues) {
        for field in incoming.present_fields() {
            let new_prov = incoming.provenance_of(field);
            if self.is_present(field)
                && self.provenance_of(field) == Provenance::Deterministic
                && new_prov == Provenance::Reasoning
            {
                continue;
            }
            match field {
                MetricField::Packaging => self.packaging = incoming.packaging.clone(),
                f => *self.number_mut(f).expect("numeric") = incoming.number(f),
            }
            self.provenance.insert(field, new_prov);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub doi: CanonicalId,
    pub pub_date: NaiveDate,
    #[serde(flatten)]
    pub values: MetricValues,
    pub updated_at: DateTime<Utc>,
}

/// Accepts `YYYY-MM-DD`, `YYYY-MM` or `YYYY`; partial dates land on the first day.
pub fn parse_pub_date(s: &str) -> Result<NaiveDate, StoreError> {
    let s = s.trim();
    let bad = || StoreError::Validation(format!("malformed publication date {s:?}"));
    let parts: Vec<&str> = s.split('-').collect();
    let num = |p: &str| -> Result<u32, StoreError> {
        if p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        p.parse().map_err(|_| bad())
    };
    let (y, m, d) = match parts.as_slice() {
        [y] if y.len() == 4 => (num(y)?, 1, 1),
        [y, m] if y.len() == 4 => (num(y)?, num(m)?, 1),
        [y, m, d] if y.len() == 4 => (num(y)?, num(m)?, num(d)?),
        _ => return Err(bad()),
    };
    NaiveDate::from_ymd_opt(y as i32, m, d).ok_or_else(bad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub year: i32,
    pub mean: f64,
    pub count: usize,
}

pub const METRICS_CSV_HEADER: [&str; 9] = [
    "doi",
    "pub_date",
    "bandwidth_3db_ghz",
    "vpi_l_v_cm",
    "insertion_loss_db",
    "energy_per_bit_fj",
    "packaging",
    "provenance",
    "updated_at",
];

pub type SharedMetrics = Arc<RwLock<MetricsTable>>;

/// In-memory table with whole-file JSON persistence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTable {
    rows: BTreeMap<CanonicalId, MetricsRow>,
}

impl MetricsTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn shared(self) -> SharedMetrics {
        Arc::new(RwLock::new(self))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, doi: &CanonicalId) -> Option<&MetricsRow> {
        self.rows.get(doi)
    }

    pub fn rows(&self) -> impl Iterator<Item = &MetricsRow> {
        self.rows.values()
    }

    /// Inserts or field-wise merges; `updated_at` is always refreshed.
    pub fn upsert(
        &mut self,
        doi: CanonicalId,
        pub_date: &str,
        values: &MetricValues,
        now: DateTime<Utc>,
    ) -> Result<MetricsRow, StoreError> {
        let pub_date = parse_pub_date(pub_date)?;
        let row = self.rows.entry(doi.clone()).or_insert_with(|| MetricsRow {
            doi,
            pub_date,
            values: MetricValues::default(),
            updated_at: now,
        });
        row.pub_date = pub_date;
        row.values.merge_from(values);
        row.updated_at = now;
        Ok(row.clone())
    }

    /// Restores a row to a prior state (`None` deletes it). Used to undo a
    /// partially applied write.
    pub fn restore(&mut self, doi: &CanonicalId, prior: Option<MetricsRow>) {
        match prior {
            Some(row) => {
                self.rows.insert(doi.clone(), row);
            }
            None => {
                self.rows.remove(doi);
            }
        }
    }

    fn numeric(field: &str) -> Result<MetricField, StoreError> {
        let f: MetricField = field.parse()?;
        if !f.is_numeric() {
            return Err(StoreError::UnknownField(field.to_string()));
        }
        Ok(f)
    }

    /// Rows not dominated under the given senses. Rows missing either value
    /// are excluded. Result follows table (DOI) order.
    pub fn pareto_front(&self, x: &str, y: &str, sense: (Sense, Sense)) -> Result<Vec<MetricsRow>, StoreError> {
        let (fx, fy) = (Self::numeric(x)?, Self::numeric(y)?);
        let orient = |v: f64, s: Sense| if s == Sense::Max { v } else { -v };
        let pts: Vec<(f64, f64, &MetricsRow)> = self
            .rows
            .values()
            .filter_map(|r| {
                let (a, b) = (r.values.number(fx)?, r.values.number(fy)?);
                (a.is_finite() && b.is_finite()).then(|| (orient(a, sense.0), orient(b, sense.1), r))
            })
            .collect();
        let keep = pareto_mask(&pts.iter().map(|p| (p.0, p.1)).collect::<Vec<_>>());
        Ok(pts
            .into_iter()
            .zip(keep)
            .filter(|(_, k)| *k)
            .map(|(p, _)| p.2.clone())
            .collect())
    }

    /// Mean of present values per publication year; empty years are omitted.
    pub fn trend(&self, metric: &str) -> Result<Vec<TrendPoint>, StoreError> {
        let f = Self::numeric(metric)?;
        let mut buckets: BTreeMap<i32, (f64, usize)> = BTreeMap::new();
        for r in self.rows.values() {
            if let Some(v) = r.values.number(f) {
                let e = buckets.entry(r.pub_date.year()).or_default();
                e.0 += v;
                e.1 += 1;
            }
        }
        Ok(buckets
            .into_iter()
            .map(|(year, (sum, count))| TrendPoint {
                year,
                mean: sum / count as f64,
                count,
            })
            .collect())
    }

    pub fn to_csv(&self) -> Result<String, StoreError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| StoreError::Serde(e.to_string());
        w.write_record(METRICS_CSV_HEADER).map_err(err)?;
        let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in self.rows.values() {
            let prov = r
                .values
                .provenance
                .iter()
                .filter(|(f, _)| r.values.is_present(**f))
                .map(|(f, p)| {
                    format!(
                        "{}={}",
                        f.name(),
                        if *p == Provenance::Deterministic {
                            "deterministic"
                        } else {
                            "reasoning"
                        }
                    )
                })
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                r.doi.to_string(),
                r.pub_date.to_string(),
                num(r.values.bandwidth_3db_ghz),
                num(r.values.vpi_l_v_cm),
                num(r.values.insertion_loss_db),
                num(r.values.energy_per_bit_fj),
                r.values.packaging.clone().unwrap_or_default(),
                prov,
                r.updated_at.to_rfc3339(),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| StoreError::Serde(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| StoreError::Serde(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let rows: Vec<&MetricsRow> = self.rows.values().collect();
        let bytes = serde_json::to_vec_pretty(&rows).map_err(|e| StoreError::Serde(e.to_string()))?;
        write_atomic(path, &bytes)
    }

    /// Loads a saved table; a missing file is an empty table.
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::new()),
            Err(e) => return Err(e.into()),
        };
        let rows: Vec<MetricsRow> = serde_json::from_slice(&bytes).map_err(|e| StoreError::Serde(e.to_string()))?;
        Ok(Self {
            rows: rows.into_iter().map(|r| (r.doi.clone(), r)).collect(),
        })
    }
}

/// Maximize-both non-dominance by sorting on x descending and sweeping the
/// best y seen among strictly larger x.
fn pareto_mask(pts: &[(f64, f64)]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| pts[b].0.total_cmp(&pts[a].0).then(pts[b].1.total_cmp(&pts[a].1)));
    let mut keep = vec![false; pts.len()];
    let mut best_y = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let x = pts[order[i]].0;
        let group_max = pts[order[i]].1;
        let mut j = i;
        while j < order.len() && pts[order[j]].0 == x {
            let y = pts[order[j]].1;
            keep[order[j]] = y == group_max && group_max > best_y;
            j += 1;
        }
        best_y = best_y.max(group_max);
        i = j;
    }
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn now() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap()
    }

    fn vals(bw: Option<f64>, il: Option<f64>, prov: Provenance) -> MetricValues {
        let mut v = MetricValues::default();
        if let Some(b) = bw {
            v.set_number(MetricField::Bandwidth3dbGhz, b, prov);
        }
        if let Some(i) = il {
            v.set_number(MetricField::InsertionLossDb, i, prov);
        }
        v
    }

    fn doi(i: usize) -> CanonicalId {
        CanonicalId::doi(&format!("10.1000/x{i}")).unwrap()
    }

    #[test]
    fn upsert_inserts_and_merges() {
        let mut t = MetricsTable::new();
        t.upsert(
            doi(1),
            "2021-05-02",
            &vals(Some(40.0), Some(3.0), Provenance::Deterministic),
            now(),
        )
        .unwrap();
        assert_eq!(t.len(), 1);
        let later = now() + chrono::Duration::hours(1);
        let r = t
            .upsert(doi(1), "2021", &vals(None, Some(2.5), Provenance::Deterministic), later)
            .unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(r.values.insertion_loss_db, Some(2.5));
        assert_eq!(r.values.bandwidth_3db_ghz, Some(40.0));
        assert_eq!(r.updated_at, later);
        assert_eq!(r.pub_date, NaiveDate::from_ymd_opt(2021, 1, 1).unwrap());
    }

    #[test]
    fn reasoning_never_overwrites_deterministic() {
        let mut t = MetricsTable::new();
        t.upsert(
            doi(1),
            "2021",
            &vals(Some(40.0), None, Provenance::Deterministic),
            now(),
        )
        .unwrap();
        let r = t
            .upsert(
                doi(1),
                "2021",
                &vals(Some(99.0), Some(1.0), Provenance::Reasoning),
                now(),
            )
            .unwrap();
        assert_eq!(r.values.bandwidth_3db_ghz, Some(40.0));
        assert_eq!(r.values.insertion_loss_db, Some(1.0));
        assert_eq!(
            r.values.provenance[&MetricField::InsertionLossDb],
            Provenance::Reasoning
        );
    }

    #[test]
    fn malformed_dates_are_rejected() {
        for bad in ["", "21", "2021-13", "2021-02-30", "20x1", "2021/01/01"] {
            assert!(parse_pub_date(bad).is_err(), "{bad}");
        }
        let mut t = MetricsTable::new();
        assert!(matches!(
            t.upsert(doi(1), "yesterday", &MetricValues::default(), now()),
            Err(StoreError::Validation(_))
        ));
    }

    fn table(points: &[(f64, f64)]) -> MetricsTable {
        let mut t = MetricsTable::new();
        for (i, (x, y)) in points.iter().enumerate() {
            t.upsert(
                doi(i),
                "2020",
                &vals(Some(*x), Some(*y), Provenance::Deterministic),
                now(),
            )
            .unwrap();
        }
        t
    }

    fn front_points(t: &MetricsTable, sense: (Sense, Sense)) -> Vec<(f64, f64)> {
        let mut v: Vec<_> = t
            .pareto_front("bandwidth_3db_ghz", "insertion_loss_db", sense)
            .unwrap()
            .into_iter()
            .map(|r| (r.values.bandwidth_3db_ghz.unwrap(), r.values.insertion_loss_db.unwrap()))
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn pareto_small_cases() {
        let max2 = (Sense::Max, Sense::Max);
        assert_eq!(front_points(&table(&[(1.0, 1.0), (2.0, 2.0)]), max2), vec![(2.0, 2.0)]);
        assert_eq!(
            front_points(&table(&[(1.0, 3.0), (3.0, 1.0), (2.0, 2.0)]), max2).len(),
            3
        );
        assert!(front_points(&MetricsTable::new(), max2).is_empty());
        assert!(matches!(
            table(&[]).pareto_front("bogus", "insertion_loss_db", max2),
            Err(StoreError::UnknownField(_))
        ));
        assert!(table(&[]).pareto_front("packaging", "insertion_loss_db", max2).is_err());
    }

    #[test]
    fn pareto_excludes_rows_missing_a_field() {
        let mut t = table(&[(1.0, 1.0)]);
        t.upsert(
            doi(9),
            "2020",
            &vals(Some(50.0), None, Provenance::Deterministic),
            now(),
        )
        .unwrap();
        assert_eq!(front_points(&t, (Sense::Max, Sense::Max)), vec![(1.0, 1.0)]);
    }

    fn brute(points: &[(f64, f64)], sense: (Sense, Sense)) -> Vec<(f64, f64)> {
        let better = |a: f64, b: f64, s: Sense| if s == Sense::Max { a >= b } else { a <= b };
        let strictly = |a: f64, b: f64, s: Sense| if s == Sense::Max { a > b } else { a < b };
        let mut out: Vec<_> = points
            .iter()
            .filter(|p| {
                !points.iter().any(|q| {
                    better(q.0, p.0, sense.0)
                        && better(q.1, p.1, sense.1)
                        && (strictly(q.0, p.0, sense.0) || strictly(q.1, p.1, sense.1))
                })
            })
            .copied()
            .collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }

    proptest! {
        #[test]
        fn pareto_matches_brute_force(
            pts in prop::collection::vec((0u8..12, 0u8..12), 0..120),
            sx in any::<bool>(), sy in any::<bool>(),
        ) {
            let pts: Vec<(f64, f64)> = pts.into_iter().map(|(a, b)| (a as f64, b as f64)).collect();
            let sense = (if sx { Sense::Max } else { Sense::Min }, if sy { Sense::Max } else { Sense::Min });
            prop_assert_eq!(front_points(&table(&pts), sense), brute(&pts, sense));
        }
    }

    #[test]
    fn trend_groups_by_year() {
        let mut t = MetricsTable::new();
        t.upsert(
            doi(1),
            "2020-03-01",
            &vals(Some(2.0), None, Provenance::Deterministic),
            now(),
        )
        .unwrap();
        t.upsert(
            doi(2),
            "2020-09-01",
            &vals(Some(4.0), None, Provenance::Deterministic),
            now(),
        )
        .unwrap();
        t.upsert(doi(3), "2021", &vals(None, Some(1.0), Provenance::Deterministic), now())
            .unwrap();
        t.upsert(doi(4), "2022", &vals(Some(7.5), None, Provenance::Deterministic), now())
            .unwrap();
        let tr = t.trend("bandwidth_3db_ghz").unwrap();
        assert_eq!(
            tr,
            vec![
                TrendPoint {
                    year: 2020,
                    mean: 3.0,
                    count: 2
                },
                TrendPoint {
                    year: 2022,
                    mean: 7.5,
                    count: 1
                }
            ]
        );
    }

    #[test]
    fn save_load_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut t = table(&[(1.0, 2.0), (3.0, 4.0)]);
        let mut v = MetricValues::default();
        v.set_packaging("flip-chip", Provenance::Reasoning);
        t.upsert(doi(0), "2020", &v, now()).unwrap();
        t.save(&path).unwrap();
        assert_eq!(MetricsTable::load(&path).unwrap(), t);
        let csv = t.to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), METRICS_CSV_HEADER.join(","));
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("packaging=reasoning"));
    }
}
