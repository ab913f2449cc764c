//! Sweep execution, the per-run results table, judging and summaries.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;
use std::time::Instant;

use chrono::{DateTime, TimeZone, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    aggregate_efficiency, citation_prf, compute_aurc, compute_ece, CitationPrf, EfficiencySummary, EvalError, Question,
    QuestionCategory, QuestionSet, SourceMatcher, DEFAULT_ECE_BINS,
};
use crate::clock::FixedClock;
use crate::config::{EngineConfig, RunConfig};
use crate::fsm::{Engine, RunOutcome, SearchProvider};
use crate::gateway::{parse_judge, tags, Gateway, ModelRoleBinding, ReasoningLevel};
use crate::retrieval::Retriever;

/// Column order of the results table.
pub const RESULTS_HEADER: [&str; 20] = [
    "system_id",
    "question_id",
    "category",
    "relevance_model",
    "confidence_model",
    "knowledge_model",
    "retrieval_k",
    "reasoning_level",
    "temperature",
    "allow_online_search",
    "seed",
    "confidence_score",
    "confidence_flag",
    "answers",
    "citations_raw",
    "latency_s",
    "token_in",
    "token_out",
    "cost_usd",
    "failed",
];

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub system_id: String,
    pub question_id: String,
    pub category: QuestionCategory,
    pub relevance_model: String,
    pub confidence_model: String,
    pub knowledge_model: String,
    pub retrieval_k: usize,
    pub reasoning_level: ReasoningLevel,
    pub temperature: Option<f64>,
    pub allow_online_search: bool,
    pub seed: u64,
    pub confidence_score: f64,
    /// The answer was withheld or carries a disclaimer.
    pub confidence_flag: bool,
    pub answers: String,
    /// JSON array of `{doc_id, span_id, title}`.
    pub citations_raw: String,
    pub latency_s: f64,
    pub token_in: u64,
    pub token_out: u64,
    pub cost_usd: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CitationCell {
    doc_id: String,
    span_id: u32,
    title: String,
}

impl RunRecord {
    fn blank(run: &RunConfig, category: QuestionCategory) -> Self {
        Self {
            system_id: run.system_id.clone(),
            question_id: run.question_id.clone(),
            category,
            relevance_model: run.relevance_model.clone(),
            confidence_model: run.confidence_model.clone(),
            knowledge_model: run.knowledge_model.clone(),
            retrieval_k: run.retrieval_k,
            reasoning_level: run.reasoning_level,
            temperature: run.temperature,
            allow_online_search: run.allow_online_search,
            seed: run.seed,
            confidence_score: 0.0,
            confidence_flag: false,
            answers: String::new(),
            citations_raw: "[]".into(),
            latency_s: 0.0,
            token_in: 0,
            token_out: 0,
            cost_usd: 0.0,
            failed: false,
        }
    }

    /// Distinct cited titles, in citation order.
    pub fn cited_titles(&self) -> Vec<String> {
        let cells: Vec<CitationCell> = serde_json::from_str(&self.citations_raw).unwrap_or_default();
        let mut out: Vec<String> = Vec::new();
        for c in cells {
            if !out.contains(&c.title) {
                out.push(c.title);
            }
        }
        out
    }

    /// Factor levels other than the question, as one string.
    pub fn config_key(&self) -> String {
        format!(
            "{}|{}|{}|{}|k={}|{}|t={}|online={}",
            self.system_id,
            self.relevance_model,
            self.confidence_model,
            self.knowledge_model,
            self.retrieval_k,
            self.reasoning_level.as_str(),
            self.temperature
                .map(|t| t.to_string())
                .unwrap_or_else(|| "default".into()),
            self.allow_online_search
        )
    }
}

/// How run latency is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimingMode {
    Wall,
    /// Each run gets its own clock advancing `step_ms` per read; latency is
    /// the clock difference, so tables are reproducible.
    Simulated {
        step_ms: i64,
    },
}

/// Shared collaborators for every run of a sweep.
#[derive(Clone)]
pub struct HarnessContext {
    pub gateway: Arc<Gateway>,
    pub retriever: Retriever,
    pub base: EngineConfig,
    pub search: Option<Arc<dyn SearchProvider>>,
    pub timing: TimingMode,
}

impl std::fmt::Debug for HarnessContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HarnessContext")
            .field("base", &self.base)
            .field("timing", &self.timing)
            .finish_non_exhaustive()
    }
}

impl HarnessContext {
    pub fn new(gateway: Arc<Gateway>, retriever: Retriever, base: EngineConfig) -> Self {
        Self {
            gateway,
            retriever,
            base,
            search: None,
            timing: TimingMode::Wall,
        }
    }

    pub fn with_search(mut self, search: Arc<dyn SearchProvider>) -> Self {
        self.search = Some(search);
        self
    }

    pub fn with_timing(mut self, timing: TimingMode) -> Self {
        self.timing = timing;
        self
    }
}

fn sim_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).single().expect("valid epoch")
}

/// Runs one question under one configuration. Engine failures become a row
/// with `failed = true` rather than an error.
pub fn run_one(ctx: &HarnessContext, run: &RunConfig, question: &Question) -> RunRecord {
    let mut engine = Engine::new(ctx.gateway.clone(), ctx.retriever.clone(), ctx.base.clone());
    if let Some(s) = &ctx.search {
        engine = engine.with_search(s.clone());
    }
    let sim = match ctx.timing {
        TimingMode::Simulated { step_ms } => {
            let c = FixedClock::ticking(sim_epoch(), step_ms);
            engine = engine.with_clock(Arc::new(c.clone()));
            Some(c)
        }
        TimingMode::Wall => None,
    };
    let started = Instant::now();
    let sim_start = sim.as_ref().map(crate::clock::Clock::now);
    let result = engine.ask_with(&question.question, false, run);
    let latency_s = match (&sim, sim_start) {
        (Some(c), Some(t0)) => (crate::clock::Clock::now(c) - t0).num_milliseconds() as f64 / 1000.0,
        _ => started.elapsed().as_secs_f64(),
    };

    let mut rec = RunRecord::blank(run, question.category);
    rec.latency_s = latency_s;
    match result {
        Ok(outcome) => {
            let usage = outcome.usage();
            rec.token_in = usage.token_in;
            rec.token_out = usage.token_out;
            rec.cost_usd = usage.cost_usd;
            match outcome {
                RunOutcome::Irrelevant { refusal, .. } => rec.answers = refusal,
                RunOutcome::Answered(a) => {
                    rec.confidence_score = a.final_confidence.value();
                    rec.confidence_flag = a.abstained || a.disclaimer.is_some();
                    rec.answers = a.answer_text;
                    let cells: Vec<CitationCell> = a
                        .citations
                        .iter()
                        .map(|c| CitationCell {
                            doc_id: c.doc_id.to_string(),
                            span_id: c.span_id,
                            title: c.title.clone(),
                        })
                        .collect();
                    rec.citations_raw = serde_json::to_string(&cells).expect("citations serialize");
                }
            }
        }
        Err(e) => {
            tracing::warn!(question = %question.id, error = %e, "run failed");
            rec.failed = true;
            rec.answers = e.to_string();
        }
    }
    rec
}

/// Executes the manifest on `workers` threads. Rows come back in manifest
/// order regardless of scheduling.
pub fn run_sweep(
    ctx: &HarnessContext,
    manifest: &[RunConfig],
    questions: &QuestionSet,
    workers: usize,
) -> Result<Vec<RunRecord>, EvalError> {
    let lookup: BTreeMap<&str, &Question> = questions.questions.iter().map(|q| (q.id.as_str(), q)).collect();
    let jobs = manifest
        .iter()
        .map(|r| {
            lookup
                .get(r.question_id.as_str())
                .map(|q| (r, *q))
                .ok_or_else(|| EvalError::Invalid(format!("manifest names unknown question {:?}", r.question_id)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| EvalError::Invalid(format!("worker pool: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(|(r, q)| run_one(ctx, r, q)).collect()))
}

pub fn write_results_csv(records: &[RunRecord], out: impl Write) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(RESULTS_HEADER)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv(input: impl Read) -> Result<Vec<RunRecord>, EvalError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<RunRecord>, _>>()?)
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Some(true),
        "0" | "false" | "no" | "n" => Some(false),
        _ => None,
    }
}

/// `(confidence, correct)` pairs from a CSV with a `confidence` (or
/// `confidence_score`) column and a `correct` column.
pub fn read_calibration_csv(input: impl Read) -> Result<Vec<(f64, bool)>, EvalError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let col = |names: &[&str]| headers.iter().position(|h| names.contains(&h.trim()));
    let ci =
        col(&["confidence", "confidence_score"]).ok_or_else(|| EvalError::Parse("missing confidence column".into()))?;
    let ki = col(&["correct"]).ok_or_else(|| EvalError::Parse("missing correct column".into()))?;
    let mut out = Vec::new();
    for (line, row) in r.records().enumerate() {
        let row = row?;
        let c: f64 = row
            .get(ci)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| EvalError::Parse(format!("row {}: bad confidence", line + 1)))?;
        let ok = row
            .get(ki)
            .and_then(parse_flag)
            .ok_or_else(|| EvalError::Parse(format!("row {}: bad correct flag", line + 1)))?;
        out.push((c, ok));
    }
    Ok(out)
}

/// Decides whether an answer agrees with the reference.
pub trait Judge: Send + Sync {
    fn judge(&self, question: &Question, answer: &str) -> Result<bool, EvalError>;
}

/// Asks a model through the gateway's judge prompt.
#[derive(Debug, Clone)]
pub struct GatewayJudge {
    pub gateway: Arc<Gateway>,
    pub binding: ModelRoleBinding,
    pub budget: u32,
}

impl Judge for GatewayJudge {
    fn judge(&self, question: &Question, answer: &str) -> Result<bool, EvalError> {
        let vars = crate::bindings! {
            "question" => question.question.as_str(),
            "gold" => question.gold_answer.as_str(),
            "answer" => answer,
        };
        Ok(self
            .gateway
            .ask(tags::JUDGE, &self.binding, vars, parse_judge, self.budget)?
            .value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRun {
    pub record: RunRecord,
    pub correct: bool,
    pub citations: CitationPrf,
}

/// Judges every successful run and aligns its citations with the gold
/// sources. Failed runs are skipped.
pub fn score_runs(
    records: &[RunRecord],
    questions: &QuestionSet,
    judge: &dyn Judge,
    matcher: &dyn SourceMatcher,
) -> Result<Vec<ScoredRun>, EvalError> {
    records
        .iter()
        .filter(|r| !r.failed)
        .map(|r| {
            let q = questions
                .get(&r.question_id)
                .ok_or_else(|| EvalError::Invalid(format!("unknown question {:?}", r.question_id)))?;
            Ok(ScoredRun {
                correct: judge.judge(q, &r.answers)?,
                citations: citation_prf(&r.cited_titles(), &q.gold_sources, matcher),
                record: r.clone(),
            })
        })
        .collect()
}

/// Per-group accuracy, calibration, citation alignment and efficiency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub key: String,
    pub runs: usize,
    pub failed: usize,
    pub accuracy: f64,
    pub ece: f64,
    pub aurc: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    pub efficiency: EfficiencySummary,
}

/// Groups rows by `key`; groups without a successful run are left out.
pub fn summarize(
    records: &[RunRecord],
    scored: &[ScoredRun],
    key: impl Fn(&RunRecord) -> String,
) -> Result<Vec<SystemSummary>, EvalError> {
    let mut groups: BTreeMap<String, (Vec<RunRecord>, Vec<&ScoredRun>)> = BTreeMap::new();
    for r in records {
        groups.entry(key(r)).or_default().0.push(r.clone());
    }
    for s in scored {
        groups.entry(key(&s.record)).or_default().1.push(s);
    }
    let mut out = Vec::new();
    for (k, (rows, scored)) in groups {
        if scored.is_empty() {
            continue;
        }
        let n = scored.len() as f64;
        let pairs: Vec<(f64, bool)> = scored.iter().map(|s| (s.record.confidence_score, s.correct)).collect();
        let mean = |f: fn(&CitationPrf) -> f64| scored.iter().map(|s| f(&s.citations)).sum::<f64>() / n;
        out.push(SystemSummary {
            key: k,
            runs: rows.len(),
            failed: rows.iter().filter(|r| r.failed).count(),
            accuracy: pairs.iter().filter(|p| p.1).count() as f64 / n,
            ece: compute_ece(&pairs, DEFAULT_ECE_BINS)?,
            aurc: compute_aurc(&pairs)?,
            mean_precision: mean(|c| c.precision),
            mean_recall: mean(|c| c.recall),
            mean_f1: mean(|c| c.f1),
            efficiency: aggregate_efficiency(&rows)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: usize) -> RunRecord {
        let run = RunConfig {
            question_id: format!("q{i}"),
            seed: i as u64,
            ..RunConfig::default()
        };
        let mut r = RunRecord::blank(&run, QuestionCategory::FactualExtraction);
        r.answers = "line one, \"quoted\"\nline two".into();
        r.confidence_score = 0.75;
        r
    }

    #[test]
    fn csv_header_and_round_trip() {
        let rows = vec![record(0), record(1)];
        let mut buf = Vec::new();
        write_results_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), RESULTS_HEADER.join(","));
        assert_eq!(read_results_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn calibration_csv_columns() {
        let pairs = read_calibration_csv("confidence_score,correct\n0.5,1\n0.25,no\n".as_bytes()).unwrap();
        assert_eq!(pairs, vec![(0.5, true), (0.25, false)]);
        assert!(read_calibration_csv("c,correct\n0.5,1\n".as_bytes()).is_err());
    }
}
