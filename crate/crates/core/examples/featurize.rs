//! Block-histogram features and Manhattan distances between a few textures.
//! Same-class pairs from different subjects should sit closer than cross-class pairs.
//!
//!     cargo run --release --example featurize -- [grid]

use rarity::evalharness::SyntheticSpec;
use rarity::rarity::{featurize, l1_distance, RingParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(4);
    let data = SyntheticSpec {
        subjects: 2,
        per_cell: 1,
        ..Default::default()
    }
    .generate();
    let rp = RingParams::default();
    let feats = data
        .images
        .iter()
        .map(|img| featurize(img, &rp, grid))
        .collect::<Result<Vec<_>, _>>()?;
    println!("{} vectors of length {}", feats.len(), feats[0].len());

    let names: Vec<String> = data
        .index
        .entries
        .iter()
        .map(|e| format!("{}/{}", e.subject, data.index.classes[e.label]))
        .collect();
    print!("{:>24}", "");
    for j in 0..names.len() {
        print!(" {j:>6}");
    }
    println!();
    for (i, a) in feats.iter().enumerate() {
        print!("{i:>3} {:>20}", names[i]);
        for b in &feats {
            print!(" {:>6.0}", l1_distance(a, b)?);
        }
        println!();
    }
    Ok(())
}
