//! Leave-one-subject-out accuracy of descriptor histograms with 1-NN.
//! Reads a `root/<subject>/<class>/*.pgm` tree, or generates one.
//!
//!     cargo run --release --example descriptor_loso -- [data_root] [--augment]

use rarity::evalharness::{evaluate_descriptor, Dataset, SyntheticSpec};
use rarity::rarity::RingParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let augment = args.iter().any(|a| a == "--augment");
    let data = match args.iter().find(|a| !a.starts_with("--")) {
        Some(root) => Dataset::open(root)?,
        None => SyntheticSpec::default().generate(),
    };
    let rp = RingParams::default();

    let report = evaluate_descriptor(&data, &rp, 4, augment)?;
    for f in &report.folds {
        println!("{:>6}  {}/{}", f.subject, f.correct, f.total);
    }
    println!("accuracy {:.3}", report.accuracy);
    println!("confusion (rows = truth):");
    for (name, row) in report.classes.iter().zip(&report.confusion) {
        println!("  {name:>14} {row:?}");
    }

    let control = evaluate_descriptor(&data.with_permuted_labels(1), &rp, 4, augment)?;
    println!("shuffled labels: {:.3} (chance {:.3})", control.accuracy, 1.0 / report.classes.len() as f64);
    Ok(())
}
