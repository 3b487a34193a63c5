//! Generated texture datasets standing in for face corpora.
//!
//! Each class is a periodic pattern; every subject adds its own intensity
//! offset and every image a random phase plus mild uniform noise.

use std::f64::consts::TAU;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imagio::GrayImage;

use super::{Dataset, DatasetIndex, Entry};

pub const PATTERN_NAMES: [&str; 4] = ["hstripes", "checker", "rings", "vstripes"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub subjects: usize,
    pub classes: usize,
    pub per_cell: usize,
    pub size: usize,
    pub seed: u64,
    /// Half-width of the uniform per-pixel noise.
    pub noise: f64,
    /// Half-width of the uniform per-subject intensity offset.
    pub subject_offset: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            subjects: 6,
            classes: 4,
            per_cell: 2,
            size: 32,
            seed: 0,
            noise: 2.0,
            subject_offset: 40.0,
        }
    }
}

const MEAN: f64 = 128.0;
const AMPLITUDE: f64 = 60.0;

fn pattern(class: usize, x: f64, y: f64, size: f64, phase: (f64, f64)) -> f64 {
    // Classes beyond the four base patterns reuse them at longer periods.
    let stretch = 1.0 + (class / PATTERN_NAMES.len()) as f64 * 0.5;
    let (px, py) = phase;
    match class % PATTERN_NAMES.len() {
        0 => (TAU * (y + py) / (6.0 * stretch)).sin(),
        1 => (TAU * (x + px) / (8.0 * stretch)).sin() * (TAU * (y + py) / (8.0 * stretch)).sin(),
        2 => {
            let c = (size - 1.0) / 2.0;
            let r = ((x - c + px * 0.25).powi(2) + (y - c + py * 0.25).powi(2)).sqrt();
            (TAU * r / (5.0 * stretch)).sin()
        }
        _ => (TAU * (x + px) / (4.0 * stretch)).sin(),
    }
}

impl SyntheticSpec {
    pub fn generate(&self) -> Dataset {
        assert!(self.subjects > 0 && self.classes > 0 && self.per_cell > 0 && self.size > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let classes: Vec<String> = (0..self.classes)
            .map(|c| {
                let base = PATTERN_NAMES[c % PATTERN_NAMES.len()];
                match c / PATTERN_NAMES.len() {
                    0 => format!("{c:02}_{base}"),
                    k => format!("{c:02}_{base}{}", k + 1),
                }
            })
            .collect();
        let mut entries = Vec::new();
        let mut images = Vec::new();
        let size = self.size as f64;
        for s in 0..self.subjects {
            let subject = format!("s{s:03}");
            let offset = if self.subject_offset > 0.0 {
                rng.gen_range(-self.subject_offset..=self.subject_offset)
            } else {
                0.0
            };
            for (label, class) in classes.iter().enumerate() {
                for n in 0..self.per_cell {
                    let phase = (rng.gen_range(0.0..24.0), rng.gen_range(0.0..24.0));
                    let noise = self.noise;
                    let img = GrayImage::from_fn(self.size, self.size, |x, y| {
                        let jitter = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
                        MEAN + offset + AMPLITUDE * pattern(label, x as f64, y as f64, size, phase) + jitter
                    });
                    entries.push(Entry {
                        subject: subject.clone(),
                        label,
                        path: PathBuf::from(format!("{subject}/{class}/{n:03}.pgm")),
                    });
                    images.push(img);
                }
            }
        }
        Dataset {
            index: DatasetIndex { entries, classes },
            images,
        }
    }
}
