//! Leave-one-subject-out evaluation of the network on generated textures.
//!
//!     cargo run --release --example net_loso -- [epochs] [per_cell] [--no-augment]

use std::time::Instant;

use rarity::affemonet::NetConfig;
use rarity::evalharness::{evaluate_net, NetEvalConfig, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let augment = !args.iter().any(|a| a == "--no-augment");
    let mut nums = args.iter().filter(|a| !a.starts_with("--"));
    let epochs: usize = nums.next().map(|s| s.parse()).transpose()?.unwrap_or(30);
    let per_cell: usize = nums.next().map(|s| s.parse()).transpose()?.unwrap_or(2);

    let data = SyntheticSpec {
        size: 24,
        per_cell,
        ..Default::default()
    }
    .generate();
    let cfg = NetEvalConfig {
        augment,
        ..NetEvalConfig::new(NetConfig::with_size(24, data.index.num_classes()), epochs)
    };
    let start = Instant::now();
    let report = evaluate_net(&data, &cfg)?;
    for f in &report.folds {
        println!("{:>6}  {:.3}", f.subject, f.accuracy);
    }
    println!("accuracy {:.3} over {} images in {:.1?}", report.accuracy, data.len(), start.elapsed());
    Ok(())
}
