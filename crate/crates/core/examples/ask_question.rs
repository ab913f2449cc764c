//! Ingests the synthetic corpus and asks one question through the offline
//! simulated backend.
//!
//! ```text
//! cargo run --example ask_question -- "What 3-dB bandwidth do lithium niobate modulators reach?"
//! ```

use gated_rag::config::EngineConfig;
use gated_rag::fixtures;
use gated_rag::{Engine, RunOutcome};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let question = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "What 3-dB bandwidth do lithium niobate modulators reach?".into());

    let (pipeline, report) = fixtures::ingest_fixture_corpus()?;
    println!("ingested {} documents", report.ingested);

    let engine = Engine::new(
        fixtures::simulated_gateway(),
        pipeline.stores().retriever.clone(),
        EngineConfig::default(),
    );
    match engine.ask(&question, false)? {
        RunOutcome::Answered(a) => {
            println!("confidence {} after {} search rounds", a.final_confidence, a.iterations);
            if let Some(d) = &a.disclaimer {
                println!("note: {d}");
            }
            println!("\n{}\n", a.answer_text);
            for c in &a.citations {
                println!("  [{} #{}] {} (sim {:.3})", c.doc_id, c.span_id, c.title, c.similarity);
            }
        }
        other => println!("{other:?}"),
    }
    Ok(())
}
