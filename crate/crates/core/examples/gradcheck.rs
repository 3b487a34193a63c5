//! Finite-difference check of the full network's gradient.
//!
//!     cargo run --release --example gradcheck -- [seed] [size] [samples_per_tensor]

use std::time::Instant;

use rarity::cli::{network_gradcheck, GRADCHECK_TOLERANCE};

fn main() -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let size: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(24);
    let samples: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(32);

    let start = Instant::now();
    let report = network_gradcheck(seed, size, 4, samples, 1e-5)?;
    let mut groups: Vec<_> = report.groups.iter().collect();
    groups.sort_by(|a, b| b.max_rel_error.total_cmp(&a.max_rel_error));
    println!("worst tensors:");
    for g in groups.iter().take(8) {
        println!("  {:<24} {:.2e}", g.name, g.max_rel_error);
    }
    println!(
        "max relative error {:.3e} (limit {GRADCHECK_TOLERANCE:e}), {} checked, {} skipped, {:.1?}",
        report.max_rel_error,
        report.checked,
        report.skipped,
        start.elapsed()
    );
    Ok(())
}
