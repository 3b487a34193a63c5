//! Writes the ten training variants of an image (five rotations, each with its mirror).
//!
//!     cargo run --release --example augment -- [input.pgm] [out_dir]

use std::path::PathBuf;

use rarity::evalharness::SyntheticSpec;
use rarity::imagio::{augment_set, read_pgm_file, write_pgm_file, AUGMENT_ANGLES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let img = match args.next() {
        Some(p) => read_pgm_file(p)?,
        None => SyntheticSpec {
            subjects: 1,
            classes: 3,
            per_cell: 1,
            size: 64,
            ..Default::default()
        }
        .generate()
        .images[2]
            .clone(),
    };
    let out: PathBuf = args.next().map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("rarity_augment"));
    std::fs::create_dir_all(&out)?;

    for (i, v) in augment_set(&img).iter().enumerate() {
        let angle = AUGMENT_ANGLES[i % AUGMENT_ANGLES.len()];
        let name = format!("{i}_{}{angle:+}.pgm", if i >= AUGMENT_ANGLES.len() { "flip" } else { "rot" });
        write_pgm_file(out.join(&name), v)?;
        println!("{name}");
    }
    println!("-> {}", out.display());
    Ok(())
}
