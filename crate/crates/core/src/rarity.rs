//! Inter-radial ring-topology descriptor.
//!
//! Every pixel is surrounded by two rings of samples: `p` points on an inner
//! ring of radius `r1` and `2p` points on an outer ring of radius `r2`. Each
//! bit of a code relates one anchor on one ring with two adjacent partners
//! on the other ring:
//!
//! * inner anchor `i` is paired with outer samples `2i − 1` and `2i + 1`;
//! * outer anchor `2i` is paired with inner samples `i + 1` and `i`.
//!
//! With `T` and `U` the signed differences `anchor − partner`, a bit is set
//! when both are positive (bright-to-dark maps) or both negative
//! (dark-to-bright maps). The four code maps are ordered
//!
//! | map | anchor ring | test           |
//! |-----|-------------|----------------|
//! | 1   | outer       | `T > 0, U > 0` |
//! | 2   | inner       | `T > 0, U > 0` |
//! | 3   | outer       | `T < 0, U < 0` |
//! | 4   | inner       | `T < 0, U < 0` |
//!
//! so inverting the image (`255 − I`) swaps maps 1↔3 and 2↔4. The center
//! pixel never takes part in a comparison.
//!
//! Nothing in the literature fixes the ring geometry numerically; the
//! defaults (`r1 = 1`, `r2 = 2`, `p = 8`) are the smallest two-ring layout
//! that keeps codes in a byte.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagio::{snap, GrayImage};

/// Number of code maps produced per image.
pub const ETA_COUNT: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum DescriptorError {
    #[error("invalid ring parameters: {0}")]
    InvalidRing(String),
    #[error("neighbor index {idx} out of range for {count} samples")]
    IndexOutOfRange { idx: usize, count: usize },
    #[error("image {width}x{height} is smaller than the required {min}x{min}")]
    ImageTooSmall { width: usize, height: usize, min: usize },
    #[error("feature length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid histogram grid {grid} for a {width}x{height} map")]
    InvalidGrid { grid: usize, width: usize, height: usize },
}

/// Geometry of the two sampling rings. The outer ring always carries twice
/// as many samples as the inner one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingParams {
    pub r1: f64,
    pub r2: f64,
    pub p: usize,
}

impl Default for RingParams {
    fn default() -> Self {
        Self {
            r1: 1.0,
            r2: 2.0,
            p: 8,
        }
    }
}

impl RingParams {
    pub fn new(r1: f64, r2: f64, p: usize) -> Result<Self, DescriptorError> {
        let rp = Self { r1, r2, p };
        rp.validate()?;
        Ok(rp)
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        if !(self.r1 > 0.0 && self.r1 < self.r2 && self.r2.is_finite()) {
            return Err(DescriptorError::InvalidRing(format!(
                "need 0 < r1 < r2, got r1={} r2={}",
                self.r1, self.r2
            )));
        }
        if !(4..=8).contains(&self.p) {
            return Err(DescriptorError::InvalidRing(format!(
                "p must lie in 4..=8, got {}",
                self.p
            )));
        }
        Ok(())
    }

    /// Sample count on the outer ring.
    pub fn q(&self) -> usize {
        2 * self.p
    }

    /// Number of distinct codes per map.
    pub fn bins(&self) -> usize {
        1 << self.p
    }

    /// Smallest admissible image side, `2·r2 + 1`.
    pub fn min_side(&self) -> usize {
        (2.0 * self.r2).ceil() as usize + 1
    }
}

/// Offset of sample `idx` out of `count` on a ring of `radius`: index 0 points
/// along +x and indices advance counter-clockwise (towards −y in image rows).
#[inline]
fn ring_offset(radius: f64, count: usize, idx: usize) -> (f64, f64) {
    let theta = 2.0 * PI * idx as f64 / count as f64;
    (snap(radius * theta.cos()), snap(-radius * theta.sin()))
}

/// Bilinear sample of neighbor `idx` on the ring of `radius` around `(x, y)`.
pub fn sample_ring(
    img: &GrayImage,
    x: usize,
    y: usize,
    radius: f64,
    count: usize,
    idx: usize,
) -> Result<f64, DescriptorError> {
    if idx >= count {
        return Err(DescriptorError::IndexOutOfRange { idx, count });
    }
    let (dx, dy) = ring_offset(radius, count, idx);
    Ok(img.sample_bilinear(x as f64 + dx, y as f64 + dy))
}

/// Four per-pixel code maps with the source image's dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RarityResponse {
    width: usize,
    height: usize,
    p: usize,
    maps: [Vec<u8>; ETA_COUNT],
}

impl RarityResponse {
    /// Wraps externally produced code maps (each `width × height`, codes below `2^p`).
    pub fn from_maps(width: usize, height: usize, p: usize, maps: [Vec<u8>; ETA_COUNT]) -> Result<Self, DescriptorError> {
        if !(1..=8).contains(&p) {
            return Err(DescriptorError::InvalidRing(format!("code width {p} outside 1..=8")));
        }
        for m in &maps {
            if m.len() != width * height {
                return Err(DescriptorError::LengthMismatch {
                    left: m.len(),
                    right: width * height,
                });
            }
            if m.iter().any(|&c| (c as usize) >> p != 0) {
                return Err(DescriptorError::InvalidRing(format!("code out of range for p = {p}")));
            }
        }
        Ok(Self { width, height, p, maps })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Code map `eta` (0-based, so map 1 is `map(0)`).
    pub fn map(&self, eta: usize) -> &[u8] {
        &self.maps[eta]
    }

    pub fn maps(&self) -> &[Vec<u8>; ETA_COUNT] {
        &self.maps
    }

    pub fn code(&self, eta: usize, x: usize, y: usize) -> u8 {
        self.maps[eta][y * self.width + x]
    }

    /// Code map as an image with one gray level per code.
    pub fn to_image(&self, eta: usize) -> GrayImage {
        GrayImage::new(
            self.width,
            self.height,
            self.maps[eta].iter().map(|&c| c as f64).collect(),
        )
        .expect("codes are valid intensities")
    }
}

/// Encodes every pixel of `img` into four inter-radial code maps.
pub fn encode_rarity(img: &GrayImage, rp: &RingParams) -> Result<RarityResponse, DescriptorError> {
    rp.validate()?;
    let (w, h) = (img.width(), img.height());
    let min = rp.min_side();
    if w < min || h < min {
        return Err(DescriptorError::ImageTooSmall {
            width: w,
            height: h,
            min,
        });
    }
    let p = rp.p;
    let q = rp.q();
    let inner_offsets: Vec<_> = (0..p).map(|i| ring_offset(rp.r1, p, i)).collect();
    let outer_offsets: Vec<_> = (0..q).map(|j| ring_offset(rp.r2, q, j)).collect();

    // Row-parallel; every row writes its own slice, so the result does not
    // depend on scheduling.
    let rows: Vec<[Vec<u8>; ETA_COUNT]> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut inner = vec![0.0; p];
            let mut outer = vec![0.0; q];
            let mut row: [Vec<u8>; ETA_COUNT] = Default::default();
            for m in row.iter_mut() {
                m.reserve_exact(w);
            }
            for x in 0..w {
                let (fx, fy) = (x as f64, y as f64);
                for (s, &(dx, dy)) in inner.iter_mut().zip(&inner_offsets) {
                    *s = img.sample_bilinear(fx + dx, fy + dy);
                }
                for (s, &(dx, dy)) in outer.iter_mut().zip(&outer_offsets) {
                    *s = img.sample_bilinear(fx + dx, fy + dy);
                }
                let codes = pixel_codes(&inner, &outer);
                for (m, c) in row.iter_mut().zip(codes) {
                    m.push(c);
                }
            }
            row
        })
        .collect();

    let mut maps: [Vec<u8>; ETA_COUNT] = Default::default();
    for m in maps.iter_mut() {
        m.reserve_exact(w * h);
    }
    for row in rows {
        for (m, r) in maps.iter_mut().zip(row) {
            m.extend(r);
        }
    }
    Ok(RarityResponse {
        width: w,
        height: h,
        p,
        maps,
    })
}

/// Codes for one pixel from its `p` inner and `2p` outer samples.
#[inline]
fn pixel_codes(inner: &[f64], outer: &[f64]) -> [u8; ETA_COUNT] {
    let p = inner.len();
    let q = outer.len();
    let mut codes = [0u8; ETA_COUNT];
    for i in 0..p {
        let bit = 1u8 << i;

        // Outer anchor 2i against inner i+1 and i.
        let a = outer[2 * i];
        let t = a - inner[(i + 1) % p];
        let u = a - inner[i];
        if t > 0.0 && u > 0.0 {
            codes[0] |= bit;
        } else if t < 0.0 && u < 0.0 {
            codes[2] |= bit;
        }

        // Inner anchor i against outer 2i−1 and 2i+1.
        let a = inner[i];
        let t = a - outer[(2 * i + q - 1) % q];
        let u = a - outer[2 * i + 1];
        if t > 0.0 && u > 0.0 {
            codes[1] |= bit;
        } else if t < 0.0 && u < 0.0 {
            codes[3] |= bit;
        }
    }
    codes
}

/// A single code map (used by the LBP baseline).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeMap {
    pub width: usize,
    pub height: usize,
    pub codes: Vec<u8>,
}

/// Classic local binary pattern: bit `i` is set when ring sample `i` is at
/// least the center intensity.
pub fn encode_lbp(img: &GrayImage, radius: f64, count: usize) -> Result<CodeMap, DescriptorError> {
    if count == 0 || count > 8 {
        return Err(DescriptorError::InvalidRing(format!(
            "LBP neighbor count must lie in 1..=8, got {count}"
        )));
    }
    if radius.is_nan() || radius <= 0.0 {
        return Err(DescriptorError::InvalidRing(format!("radius must be positive, got {radius}")));
    }
    let min = (2.0 * radius).ceil() as usize + 1;
    let (w, h) = (img.width(), img.height());
    if w < min || h < min {
        return Err(DescriptorError::ImageTooSmall {
            width: w,
            height: h,
            min,
        });
    }
    let offsets: Vec<_> = (0..count).map(|i| ring_offset(radius, count, i)).collect();
    let mut codes = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let center = img.get(x, y);
            let mut code = 0u8;
            for (i, &(dx, dy)) in offsets.iter().enumerate() {
                if img.sample_bilinear(x as f64 + dx, y as f64 + dy) >= center {
                    code |= 1 << i;
                }
            }
            codes.push(code);
        }
    }
    Ok(CodeMap {
        width: w,
        height: h,
        codes,
    })
}

/// Concatenated block histograms of the four code maps.
///
/// Layout is `[map][block row][block col][bin]`, `bins = 2^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub grid: usize,
    pub p: usize,
    pub eta_count: usize,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn bins(&self) -> usize {
        1 << self.p
    }

    /// Histogram of map `eta` in block (`row`, `col`).
    pub fn block(&self, eta: usize, row: usize, col: usize) -> &[f64] {
        let bins = self.bins();
        let start = ((eta * self.grid + row) * self.grid + col) * bins;
        &self.values[start..start + bins]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("feature vectors always serialize")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// Block index along one axis; the remainder pixels fall into the last block.
#[inline]
fn block_of(pos: usize, extent: usize, grid: usize) -> usize {
    (pos / (extent / grid)).min(grid - 1)
}

/// Splits every map into `grid × grid` blocks and counts codes per block.
pub fn block_histograms(resp: &RarityResponse, grid: usize) -> Result<FeatureVector, DescriptorError> {
    let (w, h) = (resp.width, resp.height);
    if grid == 0 || w < grid || h < grid {
        return Err(DescriptorError::InvalidGrid {
            grid,
            width: w,
            height: h,
        });
    }
    let bins = 1usize << resp.p;
    let per_map = grid * grid * bins;
    let mut values = vec![0.0; ETA_COUNT * per_map];
    let col_block: Vec<usize> = (0..w).map(|x| block_of(x, w, grid)).collect();
    for (eta, map) in resp.maps.iter().enumerate() {
        let base = eta * per_map;
        for (y, row) in map.chunks_exact(w).enumerate() {
            let by = block_of(y, h, grid);
            for (x, &code) in row.iter().enumerate() {
                values[base + (by * grid + col_block[x]) * bins + code as usize] += 1.0;
            }
        }
    }
    Ok(FeatureVector {
        grid,
        p: resp.p,
        eta_count: ETA_COUNT,
        values,
    })
}

/// Manhattan distance between two feature vectors.
pub fn l1_distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64, DescriptorError> {
    l1_slices(&a.values, &b.values)
}

pub fn l1_slices(a: &[f64], b: &[f64]) -> Result<f64, DescriptorError> {
    if a.len() != b.len() {
        return Err(DescriptorError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// Convenience: encode then histogram.
pub fn featurize(img: &GrayImage, rp: &RingParams, grid: usize) -> Result<FeatureVector, DescriptorError> {
    block_histograms(&encode_rarity(img, rp)?, grid)
}
