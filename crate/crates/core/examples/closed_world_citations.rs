//! Runs a draft containing one real and two invented citations through the
//! closed-world filter.

use gated_rag::citation::{enforce_closed_world, render_marker, ClosedWorldOutcome, FidelityPolicy};
use gated_rag::fixtures;
use gated_rag::{CanonicalId, RetrievalConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (pipeline, _) = fixtures::ingest_fixture_corpus()?;
    let evidence = pipeline
        .stores()
        .retriever
        .dynamic_k_retrieve("lithium niobate modulator bandwidth", &RetrievalConfig::default())?
        .evidence;
    let real = &evidence[0];
    let invented = CanonicalId::doi("10.9999/never.published")?;

    let draft = format!(
        "- {} {}\n- A record-breaking result was also shown. {}\n- The same paper reports more. {}\n",
        "Thin-film devices reach high bandwidth.",
        render_marker(&real.chunk.doc_id, real.chunk.span_id),
        render_marker(&invented, 0),
        render_marker(&real.chunk.doc_id, 999),
    );
    println!("draft:\n{draft}");

    match enforce_closed_world(&draft, &evidence, &FidelityPolicy::default()) {
        ClosedWorldOutcome::Final(f) => {
            for r in &f.rejected {
                println!("rejected {} #{} at byte {}", r.doc_id, r.span_id, r.position);
            }
            println!("\nfinal:\n{}", f.text);
            println!(
                "draft fabricated rate {:.3}, final fabricated rate {:.3}, claim coverage {:.2}",
                f.draft_report.fabricated_rate, f.report.fabricated_rate, f.report.claim_coverage
            );
        }
        ClosedWorldOutcome::Abstain(reason) => println!("abstained: {reason:?}"),
    }
    Ok(())
}
