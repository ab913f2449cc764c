//! Bandwidth against VπL Pareto front and the yearly bandwidth trend from the
//! metrics extracted during ingestion.

use gated_rag::fixtures;
use gated_rag::store::Sense;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (pipeline, _) = fixtures::ingest_fixture_corpus()?;
    let table = pipeline.stores().metrics.read().map_err(|_| "metrics lock poisoned")?;
    println!("{} metric rows", table.len());

    println!("\nfront (max bandwidth, min VπL):");
    for row in table.pareto_front("bandwidth_3db_ghz", "vpi_l_v_cm", (Sense::Max, Sense::Min))? {
        println!(
            "  {}  {:>6.1} GHz  {:>4.2} V·cm",
            row.doi,
            row.values.bandwidth_3db_ghz.unwrap_or(f64::NAN),
            row.values.vpi_l_v_cm.unwrap_or(f64::NAN)
        );
    }
    println!("\nbandwidth by year:");
    for p in table.trend("bandwidth_3db_ghz")? {
        println!("  {}  mean {:>6.1} GHz over {} papers", p.year, p.mean, p.count);
    }
    Ok(())
}
