//! Command-line entry point: ask, ingest, sweep, calibrate, report, serve.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use gated_rag::assistant::{AskRequest, Assistant};
use gated_rag::config::{RunConfig, ServiceConfig};
use gated_rag::eval::{
    aggregate_by, build_manifest, compute_aurc, compute_ece, isotonic_calibrate, read_calibration_csv,
    read_results_csv, run_sweep, score_runs, write_results_csv, EvalError, Factors, GatewayJudge, HarnessContext,
    QuestionSet, TimingMode, TitleMatcher, DEFAULT_ECE_BINS,
};
use gated_rag::fixtures;
use gated_rag::gateway::{ReasoningLevel, DEFAULT_SCHEMA_BUDGET};
use gated_rag::ingest::{KeywordAxes, SyntheticCorpus};
use gated_rag::store::Sense;

#[derive(Parser, Debug)]
#[command(name = "gated-rag", version, about = "Confidence-gated research assistant")]
struct Cli {
    /// TOML service configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 4, value_parser = clap::value_parser!(u16).range(1..))]
    workers: u16,
    /// Use the offline simulated backend even when credentials are set.
    #[arg(long, global = true)]
    offline: bool,
    #[command(flatten)]
    factors: FactorFlags,
    #[command(subcommand)]
    command: Command,
}

/// Per-run factors. On `sweep` each one given replaces that factor's levels.
#[derive(Args, Debug, Clone, Default)]
struct FactorFlags {
    /// Label written to the results CSV.
    #[arg(long, global = true)]
    system_id: Option<String>,
    /// low, medium or high.
    #[arg(long, global = true, value_parser = parse_level)]
    reasoning_level: Option<ReasoningLevel>,
    /// Model for the relevance check.
    #[arg(long, global = true)]
    relevance_model: Option<String>,
    /// Model for confidence and self-evaluation.
    #[arg(long, global = true)]
    confidence_model: Option<String>,
    /// Model for decomposition and the answer.
    #[arg(long, global = true)]
    knowledge_model: Option<String>,
    /// Sampling temperature in [0, 2]; the model default when omitted.
    #[arg(long, global = true, value_parser = parse_temperature)]
    temperature: Option<f64>,
    /// Evidence passages kept for the answer.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    retrieval_k: Option<u32>,
    /// Use the configured web search during refinement.
    #[arg(long, global = true)]
    allow_online_search: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Answer one question.
    Ask {
        question: String,
        /// Store the exchange in the session index when confident.
        #[arg(long)]
        ingest: bool,
        /// Continue an existing session.
        #[arg(long)]
        session: Option<uuid::Uuid>,
    },
    /// Run the ingestion pipeline once over a corpus directory.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        /// Comma-separated platforms (default: every platform in the corpus).
        #[arg(long, value_delimiter = ',')]
        platforms: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        devices: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        speeds: Vec<String>,
    },
    /// Build a factorial manifest, execute it and write the results CSV.
    Sweep {
        /// Questions as JSON lines (default: the built-in synthetic set).
        #[arg(long)]
        questions: Option<PathBuf>,
        /// Only the first N questions.
        #[arg(long)]
        limit: Option<usize>,
        /// Factor levels as TOML.
        #[arg(long)]
        factors: Option<PathBuf>,
        /// Ingest this corpus into the stores before running.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Timing::Wall)]
        timing: Timing,
    },
    /// ECE and AURC before and after isotonic recalibration.
    Calibrate {
        /// CSV with `confidence` and `correct` columns, or a results CSV
        /// (judged against `--questions`).
        input: PathBuf,
        #[arg(long)]
        questions: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ECE_BINS)]
        bins: usize,
    },
    /// Efficiency aggregates of a results CSV plus Pareto and trend tables.
    Report {
        results: PathBuf,
        #[arg(long, default_value = "bandwidth_3db_ghz")]
        pareto_x: String,
        #[arg(long, default_value = "vpi_l_v_cm")]
        pareto_y: String,
        /// Senses of the two Pareto axes, e.g. `max,min`.
        #[arg(long, default_value = "max,min")]
        sense: String,
        #[arg(long, default_value = "bandwidth_3db_ghz")]
        trend: String,
    },
    /// Serve the HTTP endpoints.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Write the synthetic corpus and question set to a directory.
    Fixtures { dir: PathBuf },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Timing {
    Wall,
    Simulated,
}

fn parse_level(s: &str) -> Result<ReasoningLevel, String> {
    s.parse()
}

fn parse_temperature(s: &str) -> Result<f64, String> {
    let t: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=2.0).contains(&t) {
        Ok(t)
    } else {
        Err("temperature must lie in [0, 2]".into())
    }
}

impl FactorFlags {
    fn any(&self) -> bool {
        self.system_id.is_some()
            || self.reasoning_level.is_some()
            || self.relevance_model.is_some()
            || self.confidence_model.is_some()
            || self.knowledge_model.is_some()
            || self.temperature.is_some()
            || self.retrieval_k.is_some()
            || self.allow_online_search
    }

    fn run_config(&self, seed: u64) -> RunConfig {
        let d = RunConfig::default();
        RunConfig {
            system_id: self.system_id.clone().unwrap_or(d.system_id),
            question_id: String::new(),
            relevance_model: self.relevance_model.clone().unwrap_or(d.relevance_model),
            confidence_model: self.confidence_model.clone().unwrap_or(d.confidence_model),
            knowledge_model: self.knowledge_model.clone().unwrap_or(d.knowledge_model),
            retrieval_k: self.retrieval_k.map_or(d.retrieval_k, |k| k as usize),
            reasoning_level: self.reasoning_level.unwrap_or(d.reasoning_level),
            temperature: self.temperature,
            allow_online_search: self.allow_online_search,
            seed,
        }
    }

    fn apply(&self, f: &mut Factors) {
        if let Some(v) = &self.system_id {
            f.system_id = v.clone();
        }
        if let Some(v) = &self.relevance_model {
            f.relevance_models = vec![v.clone()];
        }
        if let Some(v) = &self.confidence_model {
            f.confidence_models = vec![v.clone()];
        }
        if let Some(v) = &self.knowledge_model {
            f.knowledge_models = vec![v.clone()];
        }
        if let Some(v) = self.retrieval_k {
            f.retrieval_ks = vec![v as usize];
        }
        if let Some(v) = self.reasoning_level {
            f.reasoning_levels = vec![v];
        }
        if let Some(v) = self.temperature {
            f.temperatures = vec![Some(v)];
        }
        if self.allow_online_search {
            f.allow_online_search = vec![true];
        }
    }
}

fn write_out(out: &Option<PathBuf>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn write_json(out: &Option<PathBuf>, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_out(out, text.as_bytes())
}

fn load_questions(path: Option<&Path>) -> Result<QuestionSet> {
    Ok(match path {
        Some(p) => QuestionSet::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => fixtures::fixture_questions(),
    })
}

/// Distinct keyword values of the corpus, overridden per axis by the flags.
fn axes_for(corpus: &SyntheticCorpus, platforms: &[String], devices: &[String], speeds: &[String]) -> KeywordAxes {
    let pick = |given: &[String], f: fn(&gated_rag::ingest::CorpusKeywords) -> &String| -> Vec<String> {
        if !given.is_empty() {
            return given.to_vec();
        }
        let all: BTreeSet<String> = corpus.documents().map(|(_, _, d)| f(&d.keywords).clone()).collect();
        all.into_iter().collect()
    };
    KeywordAxes::new(
        pick(platforms, |k| &k.platform),
        pick(devices, |k| &k.device_class),
        pick(speeds, |k| &k.speed_marker),
    )
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    cfg.offline |= cli.offline;

    match cli.command {
        Command::Ask {
            ref question,
            ingest,
            session,
        } => {
            let a = Assistant::open(&cfg, None)?;
            let req = AskRequest {
                question: question.clone(),
                ingest,
                session_id: session,
                // Without factor flags the service defaults apply, as on `/ask`.
                run: cli.factors.any().then(|| cli.factors.run_config(cli.seed)),
            };
            write_json(&cli.out, &serde_json::to_value(a.ask(&req)?)?)
        }
        Command::Ingest {
            ref corpus,
            ref platforms,
            ref devices,
            ref speeds,
        } => {
            let c = SyntheticCorpus::load(corpus)?;
            let axes = axes_for(&c, platforms, devices, speeds);
            let a = Assistant::open(&cfg, Some(c))?;
            let report = a.ingest(&axes)?;
            write_json(&cli.out, &serde_json::to_value(report)?)
        }
        Command::Sweep {
            ref questions,
            limit,
            ref factors,
            ref corpus,
            timing,
        } => {
            let mut qs = load_questions(questions.as_deref())?;
            if let Some(n) = limit {
                qs = QuestionSet::new(qs.questions.into_iter().take(n).collect())?;
            }
            let mut f = match factors {
                Some(p) => Factors::load(p)?,
                None => Factors::default(),
            };
            cli.factors.apply(&mut f);
            let a = match corpus {
                Some(p) => {
                    let c = SyntheticCorpus::load(p)?;
                    let axes = axes_for(&c, &[], &[], &[]);
                    let a = Assistant::open(&cfg, Some(c))?;
                    a.ingest(&axes)?;
                    a
                }
                None => Assistant::open(&cfg, None)?,
            };
            let timing = match timing {
                Timing::Wall => TimingMode::Wall,
                Timing::Simulated => TimingMode::Simulated { step_ms: 7 },
            };
            let ctx = HarnessContext::new(
                a.engine().gateway().clone(),
                a.engine().retriever().clone(),
                cfg.engine.clone(),
            )
            .with_timing(timing);
            let manifest = build_manifest(&f, &qs, cli.seed)?;
            tracing::info!(runs = manifest.len(), workers = cli.workers, "sweep started");
            let rows = run_sweep(&ctx, &manifest, &qs, cli.workers as usize)?;
            let mut buf = Vec::new();
            write_results_csv(&rows, &mut buf)?;
            write_out(&cli.out, &buf)
        }
        Command::Calibrate {
            ref input,
            ref questions,
            bins,
        } => {
            let text = std::fs::read(input).with_context(|| format!("reading {}", input.display()))?;
            let pairs = match read_calibration_csv(text.as_slice()) {
                Ok(p) => p,
                Err(EvalError::Parse(_)) => {
                    let rows = read_results_csv(text.as_slice())?;
                    let qs = load_questions(questions.as_deref())?;
                    let gateway = Arc::new(cfg.gateway()?);
                    let judge = GatewayJudge {
                        gateway,
                        binding: cfg.engine.models.judge.clone(),
                        budget: DEFAULT_SCHEMA_BUDGET,
                    };
                    score_runs(&rows, &qs, &judge, &TitleMatcher::exact())?
                        .into_iter()
                        .map(|s| (s.record.confidence_score, s.correct))
                        .collect()
                }
                Err(e) => return Err(e.into()),
            };
            let map = isotonic_calibrate(&pairs)?;
            let post = map.apply_all(&pairs);
            write_json(
                &cli.out,
                &json!({
                    "records": pairs.len(),
                    "bins": bins,
                    "pre": { "ece": compute_ece(&pairs, bins)?, "aurc": compute_aurc(&pairs)? },
                    "post": { "ece": compute_ece(&post, bins)?, "aurc": compute_aurc(&post)? },
                    "mapping": map.blocks,
                }),
            )
        }
        Command::Report {
            ref results,
            ref pareto_x,
            ref pareto_y,
            ref sense,
            ref trend,
        } => {
            let file = std::fs::File::open(results).with_context(|| format!("reading {}", results.display()))?;
            let rows = read_results_csv(file)?;
            let efficiency = aggregate_by(&rows, |r| r.config_key());
            let Some((sx, sy)) = sense.split_once(',') else {
                bail!("--sense expects two comma-separated values such as max,min");
            };
            let senses: (Sense, Sense) = (sx.parse()?, sy.parse()?);
            let a = Assistant::open(&cfg, None)?;
            let table = a
                .pipeline()
                .stores()
                .metrics
                .read()
                .map_err(|_| anyhow::anyhow!("metrics lock poisoned"))?
                .clone();
            write_json(
                &cli.out,
                &json!({
                    "runs": rows.len(),
                    "failed": rows.iter().filter(|r| r.failed).count(),
                    "efficiency": efficiency,
                    "pareto": { "x": pareto_x, "y": pareto_y, "front": table.pareto_front(pareto_x, pareto_y, senses)? },
                    "trend": { "metric": trend, "points": table.trend(trend)? },
                }),
            )
        }
        Command::Serve { ref bind, ref corpus } => {
            let c = corpus.as_deref().map(SyntheticCorpus::load).transpose()?;
            let a = Arc::new(Assistant::open(&cfg, c)?);
            let addr = bind.clone().unwrap_or_else(|| cfg.bind.clone());
            tokio::runtime::Runtime::new()?.block_on(gated_rag::service::serve(a, &addr))?;
            Ok(())
        }
        Command::Fixtures { ref dir } => {
            fixtures::synthetic_corpus().write_to(&dir.join("corpus"))?;
            std::fs::write(dir.join("questions.jsonl"), fixtures::fixture_questions().to_jsonl())?;
            std::fs::write(
                dir.join("calibration.csv"),
                fixtures::overconfident_calibration_csv(400, cli.seed),
            )?;
            eprintln!(
                "wrote corpus, questions and calibration fixture under {}",
                dir.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn,gated_rag=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    // clap exits with 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Sources already folded into a parent message are skipped.
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    msg = if msg.is_empty() {
                        cause
                    } else {
                        format!("{msg}: {cause}")
                    };
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
