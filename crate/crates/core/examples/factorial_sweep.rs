//! A small factorial sweep over the simulated backend: two knowledge models
//! by two retrieval depths over the first six questions. Writes the results
//! CSV to stdout and a per-configuration summary to stderr.

use gated_rag::eval::{aggregate_by, build_manifest, run_sweep, write_results_csv, Factors, QuestionSet};
use gated_rag::fixtures;
use gated_rag::gateway::ReasoningLevel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let questions = QuestionSet::new(fixtures::fixture_questions().questions.into_iter().take(6).collect())?;
    let factors = Factors {
        retrieval_ks: vec![4, 12],
        reasoning_levels: vec![ReasoningLevel::Medium],
        ..Factors::default()
    };
    let manifest = build_manifest(&factors, &questions, 1)?;
    eprintln!("{} runs", manifest.len());

    let (ctx, _pipeline) = fixtures::offline_harness()?;
    let rows = run_sweep(&ctx, &manifest, &questions, 4)?;
    write_results_csv(&rows, std::io::stdout())?;

    for (key, s) in aggregate_by(&rows, |r| r.config_key()) {
        eprintln!(
            "{key}: latency p50 {:.3} s, p90 {:.3} s; cost mean ${:.5}",
            s.latency_s.p50, s.latency_s.p90, s.cost_usd.mean
        );
    }
    Ok(())
}
