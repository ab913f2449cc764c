//! Runs the ingestion pipeline over the 50-document synthetic corpus, prints
//! the report and the missing list, and checks that a second run changes
//! nothing.

use gated_rag::fixtures;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (pipeline, report) = fixtures::ingest_fixture_corpus()?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("\nmissing list:\n{}", pipeline.missing_export());

    let before = pipeline.store_exports()?;
    pipeline.run(&fixtures::fixture_axes())?;
    let same = before == pipeline.store_exports()?;
    println!("second run left the stores unchanged: {same}");
    Ok(())
}
