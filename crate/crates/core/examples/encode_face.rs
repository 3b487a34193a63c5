//! Encodes one image and writes its four code maps next to it.
//!
//!     cargo run --release --example encode_face -- [input.pgm] [out_prefix]
//!
//! Without arguments a generated 48×48 texture is encoded into the temp dir.

use rarity::evalharness::SyntheticSpec;
use rarity::imagio::{read_pgm_file, write_pgm_file};
use rarity::rarity::{encode_rarity, RingParams, ETA_COUNT};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let img = match args.next() {
        Some(path) => read_pgm_file(path)?,
        None => {
            let data = SyntheticSpec {
                subjects: 1,
                classes: 3,
                per_cell: 1,
                size: 48,
                ..Default::default()
            }
            .generate();
            data.images[2].clone()
        }
    };
    let prefix = args
        .next()
        .unwrap_or_else(|| std::env::temp_dir().join("rarity_face").display().to_string());

    let resp = encode_rarity(&img, &RingParams::default())?;
    for eta in 0..ETA_COUNT {
        let map = resp.map(eta);
        let lit = map.iter().filter(|&&c| c != 0).count();
        let path = format!("{prefix}_eta{}.pgm", eta + 1);
        write_pgm_file(&path, &resp.to_image(eta))?;
        println!("eta{}: {lit:5} of {} pixels coded  -> {path}", eta + 1, map.len());
    }
    Ok(())
}
