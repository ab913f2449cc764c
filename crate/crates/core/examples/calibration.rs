//! ECE and AURC of an overconfident score set, before and after isotonic
//! recalibration.

use gated_rag::eval::{compute_aurc, compute_ece, isotonic_calibrate, read_calibration_csv, reliability_bins};
use gated_rag::fixtures;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let csv = fixtures::overconfident_calibration_csv(400, 7);
    let records = read_calibration_csv(csv.as_bytes())?;

    let map = isotonic_calibrate(&records)?;
    let mapped = map.apply_all(&records);
    println!("          ECE     AURC");
    println!(
        "before  {:.4}  {:.4}",
        compute_ece(&records, 10)?,
        compute_aurc(&records)?
    );
    println!(
        "after   {:.4}  {:.4}",
        compute_ece(&mapped, 10)?,
        compute_aurc(&mapped)?
    );

    println!("\nmapping:");
    for (lo, v) in &map.blocks {
        println!("  confidence >= {lo:.2} -> {v:.3}");
    }
    println!("\nreliability (before):");
    for b in reliability_bins(&records, 10)?.iter().filter(|b| b.count > 0) {
        println!(
            "  [{:.1}, {:.1})  n={:<4} conf {:.2}  acc {:.2}",
            b.lo, b.hi, b.count, b.mean_confidence, b.accuracy
        );
    }
    Ok(())
}
