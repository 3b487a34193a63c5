//! Trains a few steps, saves a checkpoint, reloads it and compares logits bit for bit.
//!
//!     cargo run --release --example checkpoint_roundtrip -- [path]

use rarity::affemonet::{load_checkpoint, save_checkpoint, Model, NetConfig};
use rarity::evalharness::SyntheticSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("rarity_demo.ckpt"));
    let data = SyntheticSpec {
        subjects: 2,
        per_cell: 1,
        size: 32,
        ..Default::default()
    }
    .generate();
    let config = NetConfig::with_size(32, data.index.num_classes());
    let mut model = Model::build(config.clone())?;
    let batch: Vec<_> = data
        .images
        .iter()
        .cloned()
        .zip(data.index.entries.iter().map(|e| e.label))
        .collect();
    for step in 0..3 {
        println!("step {step}  loss {:.4}", model.train_step(&batch)?);
    }

    let bytes = save_checkpoint(&model);
    std::fs::write(&path, &bytes)?;
    println!("{} parameters, {} bytes -> {}", model.param_count(), bytes.len(), path.display());

    let back = load_checkpoint(&std::fs::read(&path)?, &config)?;
    for img in &data.images {
        let (a, b) = (model.forward(img)?, back.forward(img)?);
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    println!("logits identical on {} images", data.len());
    Ok(())
}
