//! Fits a fresh network to 16 generated textures (4 classes) with the default
//! optimizer settings and reports how many full-batch steps it takes to
//! classify the training set.
//!
//!     cargo run --release --example train_overfit -- [seed] [max_steps]

use std::time::Instant;

use rarity::affemonet::{Model, NetConfig};
use rarity::evalharness::SyntheticSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let max_steps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(500);

    let data = SyntheticSpec {
        subjects: 4,
        classes: 4,
        per_cell: 1,
        size: 24,
        seed,
        ..Default::default()
    }
    .generate();
    let mut model = Model::build(NetConfig {
        seed,
        ..NetConfig::with_size(24, 4)
    })?;
    let inputs = data
        .images
        .iter()
        .map(|img| model.prepare(img))
        .collect::<Result<Vec<_>, _>>()?;
    let batch: Vec<_> = inputs.iter().zip(&data.index.entries).map(|(p, e)| (p, e.label)).collect();

    let start = Instant::now();
    for step in 0..max_steps {
        let out = model.train_step_prepared(&batch)?;
        if step % 25 == 0 {
            println!("step {step:4}  loss {:.5}  train acc {}/{}", out.loss, out.correct, batch.len());
        }
        if out.correct * 100 >= 95 * batch.len() {
            println!(
                "step {step:4}  loss {:.5}  train acc {}/{}  reached in {:.1?}",
                out.loss,
                out.correct,
                batch.len(),
                start.elapsed()
            );
            return Ok(());
        }
    }
    println!("not separated after {max_steps} steps ({:.1?})", start.elapsed());
    Ok(())
}
