//! Serves the HTTP endpoints over the synthetic corpus and the simulated
//! backend.
//!
//! ```text
//! cargo run --example serve -- 127.0.0.1:8080
//! curl -s localhost:8080/ask -H 'content-type: application/json' \
//!      -d '{"question": "What bandwidth do InP modulators reach?"}'
//! ```

use std::sync::Arc;

use gated_rag::config::EngineConfig;
use gated_rag::{fixtures, service, Assistant, Engine};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt().with_env_filter("info").init();
    let addr = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:8080".into());
    let (pipeline, _) = fixtures::ingest_fixture_corpus()?;
    let engine = Engine::new(
        fixtures::simulated_gateway(),
        pipeline.stores().retriever.clone(),
        EngineConfig::default(),
    );
    service::serve(Arc::new(Assistant::new(engine, pipeline)), &addr).await?;
    Ok(())
}
