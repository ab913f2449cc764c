//! Offline evaluation: benchmark questions, factorial run manifests, sweep
//! execution, and the calibration, citation-alignment and efficiency metrics
//! computed over the resulting per-run table.

mod calibration;
mod citations;
mod efficiency;
mod harness;
mod manifest;
mod questions;

pub use calibration::{
    compute_aurc, compute_ece, isotonic_calibrate, reliability_bins, risk_coverage_curve, CalibrationBin, IsotonicMap,
    RiskCoveragePoint, DEFAULT_ECE_BINS,
};
pub use citations::{
    citation_prf, coverage_novelty, normalize_gold_source, CitationPrf, SourceMatcher, TitleMatcher,
    DEFAULT_MATCH_THRESHOLD,
};
pub use efficiency::{aggregate_by, aggregate_efficiency, nearest_rank, EfficiencySummary, Stat};
pub use harness::{
    read_calibration_csv, read_results_csv, run_one, run_sweep, score_runs, summarize, write_results_csv, GatewayJudge,
    HarnessContext, Judge, RunRecord, ScoredRun, SystemSummary, TimingMode, RESULTS_HEADER,
};
pub use manifest::{build_manifest, Factors};
pub use questions::{Question, QuestionCategory, QuestionSet};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    /// The metric has no value for this input (e.g. no records).
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
}
