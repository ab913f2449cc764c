//! Prints the state trace of a run whose confidence never rises above 0.5,
//! so the engine spends its whole search budget and answers with a
//! disclaimer.

use std::sync::Arc;

use gated_rag::config::EngineConfig;
use gated_rag::fixtures;
use gated_rag::gateway::{
    render_decomposition, tags, ConfidenceScore, ConfidenceVerdict, Gateway, Provider, RateTable, ScriptedProvider,
    SimulatedProvider,
};
use gated_rag::Engine;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let verdict = ConfidenceVerdict {
        confidence_score: ConfidenceScore::HALF,
        confident: false,
        reasoning: "partial coverage".into(),
    };
    let script = ScriptedProvider::new()
        .always(tags::RELEVANCE, "Relevant: Yes")
        .always(tags::CONFIDENCE, verdict.to_reply())
        .always(
            tags::DECOMPOSITION,
            render_decomposition(&["drive voltage".to_string(), "optical loss".to_string()]),
        )
        .always(tags::SELF_EVALUATION, "0.5")
        .always(tags::FAST_DRAFT, "provisional")
        .always(tags::TITLE, "Modulator Trade-offs")
        .respond(tags::ANSWER, |req| {
            SimulatedProvider::default().complete(req).unwrap().text
        });

    let (pipeline, _) = fixtures::ingest_fixture_corpus()?;
    let gateway = Arc::new(Gateway::new(Arc::new(script), RateTable::builtin()));
    let engine = Engine::new(gateway, pipeline.stores().retriever.clone(), EngineConfig::default())
        .with_clock(fixtures::fixture_clock());

    let mut ctx = engine.start_session("How do silicon modulators trade drive voltage against loss?", false)?;
    let outcome = engine.run_question(&mut ctx)?;
    for t in &ctx.trace {
        println!("{:>2}  {:?} --{:?}--> {:?}", t.iteration_i, t.from, t.event, t.to);
    }
    if let Some(a) = outcome.answer() {
        println!("\niterations: {}", a.iterations);
        println!("disclaimer: {}", a.disclaimer.as_deref().unwrap_or("-"));
    }
    Ok(())
}
