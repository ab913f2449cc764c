//! Shows the k ladder tried on each index for a few queries, at the default
//! threshold and at a lax one. The hashing embedder gives modest
//! similarities, so at the default most queries climb the whole ladder.

use gated_rag::fixtures;
use gated_rag::RetrievalConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (pipeline, _) = fixtures::ingest_fixture_corpus()?;
    let retriever = &pipeline.stores().retriever;
    let lax = RetrievalConfig {
        similarity_threshold: 0.3,
        ..Default::default()
    };
    for query in [
        "lithium niobate modulator 3-dB bandwidth",
        "photodetector responsivity at 200G",
        "completely unrelated gardening advice",
    ] {
        for (label, cfg) in [("default", RetrievalConfig::default()), ("lax", lax)] {
            let r = retriever.dynamic_k_retrieve(query, &cfg)?;
            println!(
                "{query:?} [{label}] ladders {:?}, {} items, mean similarity {:.3}",
                r.ladders,
                r.evidence.len(),
                r.mean_similarity
            );
        }
    }
    Ok(())
}
