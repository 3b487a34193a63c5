//! Grayscale images, binary PGM (P5) I/O and the training augmentation recipe.
//!
//! Intensities are kept as `f64` in `[0, 255]`; quantization to bytes only
//! happens when an image is written out as PGM.

use std::path::Path;

use thiserror::Error;

/// Errors produced while decoding a portable graymap.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("unsupported magic {0:?}, expected \"P5\"")]
    UnsupportedMagic(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("maxval {0} exceeds 255")]
    MaxvalTooLarge(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

/// Errors from constructing or reading an image.
#[derive(Debug, Error)]
pub enum ImageError {
    #[error("data length {len} does not match {width}x{height}")]
    LengthMismatch { width: usize, height: usize, len: usize },
    #[error("intensity {value} at index {index} is outside [0, 255]")]
    OutOfRange { index: usize, value: f64 },
    #[error("image must have non-zero dimensions")]
    Empty,
    #[error(transparent)]
    Pgm(#[from] PgmError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A row-major grid of real intensities in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Empty);
        }
        if data.len() != width * height {
            return Err(ImageError::LengthMismatch {
                width,
                height,
                len: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=255.0).contains(*v))
        {
            return Err(ImageError::OutOfRange { index, value });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image filled with a single intensity (clamped into range).
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        Self {
            width,
            height,
            data: vec![value.clamp(0.0, 255.0); width * height],
        }
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel; results are clamped to `[0, 255]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 255.0));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Applies `f` to every intensity, clamping the result into range.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v).clamp(0.0, 255.0)).collect(),
        }
    }

    /// Bilinear sample at a real coordinate, clamping the coordinate to the image.
    ///
    /// Interpolation is written as `a + t·(b − a)` so that samples over a
    /// constant neighbourhood reproduce the constant exactly.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = x - x0 as f64;
        let ty = y - y0 as f64;
        let top = lerp(self.get(x0, y0), self.get(x1, y0), tx);
        let bottom = lerp(self.get(x0, y1), self.get(x1, y1), tx);
        lerp(top, bottom, ty)
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + t * (b - a)
    }
}

/// Decodes a binary P5 graymap with maxval ≤ 255.
pub fn load_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    if bytes.len() < 2 {
        return Err(PgmError::MalformedHeader("missing magic".into()));
    }
    if &bytes[..2] != b"P5" {
        return Err(PgmError::UnsupportedMagic(
            String::from_utf8_lossy(&bytes[..2]).into_owned(),
        ));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for (slot, name) in fields.iter_mut().zip(["width", "height", "maxval"]) {
        // At least one whitespace (or comment) separates the fields.
        let start = pos;
        skip_whitespace_and_comments(bytes, &mut pos);
        if pos == start {
            return Err(PgmError::MalformedHeader(format!("expected whitespace before {name}")));
        }
        *slot = read_decimal(bytes, &mut pos, name)?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 {
        return Err(PgmError::MalformedHeader("maxval must be positive".into()));
    }
    if maxval > 255 {
        return Err(PgmError::MaxvalTooLarge(maxval));
    }
    if width == 0 || height == 0 {
        return Err(PgmError::MalformedHeader("zero dimension".into()));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(PgmError::MalformedHeader(
                "missing whitespace byte after maxval".into(),
            ))
        }
    }
    let expected = width as usize * height as usize;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(PgmError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let data = payload[..expected]
        .iter()
        .map(|&b| {
            let v = b as f64;
            if maxval == 255 {
                v
            } else {
                (v * 255.0 / maxval as f64).min(255.0)
            }
        })
        .collect();
    Ok(GrayImage {
        width: width as usize,
        height: height as usize,
        data,
    })
}

fn skip_whitespace_and_comments(bytes: &[u8], pos: &mut usize) {
    while let Some(&b) = bytes.get(*pos) {
        if b == b'#' {
            while let Some(&c) = bytes.get(*pos) {
                *pos += 1;
                if c == b'\n' || c == b'\r' {
                    break;
                }
            }
        } else if b.is_ascii_whitespace() {
            *pos += 1;
        } else {
            break;
        }
    }
}

fn read_decimal(bytes: &[u8], pos: &mut usize, name: &str) -> Result<u32, PgmError> {
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(PgmError::MalformedHeader(format!("expected decimal {name}")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| PgmError::MalformedHeader(format!("{name} out of range")))
}

/// Encodes as binary P5 with maxval 255, rounding half-up.
pub fn save_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.data.len());
    out.extend_from_slice(header.as_bytes());
    out.extend(img.data.iter().map(|&v| (v + 0.5).floor().clamp(0.0, 255.0) as u8));
    out
}

pub fn read_pgm_file(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(load_pgm(&bytes)?)
}

pub fn write_pgm_file(path: impl AsRef<Path>, img: &GrayImage) -> Result<(), ImageError> {
    let path = path.as_ref();
    std::fs::write(path, save_pgm(img)).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Rotates about the image center by `angle` degrees (counter-clockwise on
/// screen), sampling the source by inverse mapping with bilinear
/// interpolation and clamp-to-edge borders.
pub fn rotate(img: &GrayImage, angle: f64) -> GrayImage {
    assert!(angle.abs() <= 180.0, "rotation angle must lie in [-180, 180]");
    if angle == 0.0 {
        return img.clone();
    }
    let (sin, cos) = angle.to_radians().sin_cos();
    let cx = (img.width as f64 - 1.0) / 2.0;
    let cy = (img.height as f64 - 1.0) / 2.0;
    let mut data = Vec::with_capacity(img.data.len());
    for y in 0..img.height {
        let dy = y as f64 - cy;
        for x in 0..img.width {
            let dx = x as f64 - cx;
            // Inverse rotation; y grows downwards, so a visually
            // counter-clockwise turn uses the mirrored sine terms.
            let sx = cx + cos * dx - sin * dy;
            let sy = cy + sin * dx + cos * dy;
            data.push(img.sample_bilinear(snap(sx), snap(sy)));
        }
    }
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Rounds coordinates that are within floating-point noise of an integer.
#[inline]
pub(crate) fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Mirrors columns: column `j` moves to `width − 1 − j`.
pub fn hflip(img: &GrayImage) -> GrayImage {
    let mut data = Vec::with_capacity(img.data.len());
    for row in img.data.chunks_exact(img.width) {
        data.extend(row.iter().rev());
    }
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Rotation angles used by [`augment_set`], ascending.
pub const AUGMENT_ANGLES: [f64; 5] = [-30.0, -15.0, 0.0, 15.0, 30.0];

/// Ten training variants: the five rotations in [`AUGMENT_ANGLES`] followed
/// by the horizontal flip of each, in the same order.
pub fn augment_set(img: &GrayImage) -> Vec<GrayImage> {
    let rotated: Vec<GrayImage> = AUGMENT_ANGLES.iter().map(|&a| rotate(img, a)).collect();
    let flipped: Vec<GrayImage> = rotated.iter().map(hflip).collect();
    rotated.into_iter().chain(flipped).collect()
}
