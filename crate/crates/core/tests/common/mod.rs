//! Reference implementations used as test oracles. They are written
//! directly from the definitions, favouring clarity over speed, and share no
//! code with the library beyond its public data types.
#![allow(dead_code)]

use rand::Rng;
use rarity::affemonet::Model;
use rarity::imagio::GrayImage;
use rarity::rarity::RingParams;

/// Real-valued image with intensities drawn from `lo..hi`.
pub fn random_image(rng: &mut impl Rng, w: usize, h: usize, lo: f64, hi: f64) -> GrayImage {
    let data = (0..w * h).map(|_| rng.gen_range(lo..hi)).collect();
    GrayImage::new(w, h, data).unwrap()
}

fn near_integer(v: f64) -> f64 {
    if (v - v.round()).abs() < 1e-9 {
        v.round()
    } else {
        v
    }
}

/// Clamped bilinear interpolation with the four corner weights.
pub fn bilinear(img: &GrayImage, x: f64, y: f64) -> f64 {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let x = x.max(0.0).min(w - 1.0);
    let y = y.max(0.0).min(h - 1.0);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let px = |xx: f64, yy: f64| img.get(xx.min(w - 1.0) as usize, yy.min(h - 1.0) as usize);
    let mut v = (1.0 - fx) * (1.0 - fy) * px(x0, y0);
    if fx > 0.0 {
        v += fx * (1.0 - fy) * px(x0 + 1.0, y0);
    }
    if fy > 0.0 {
        v += (1.0 - fx) * fy * px(x0, y0 + 1.0);
    }
    if fx > 0.0 && fy > 0.0 {
        v += fx * fy * px(x0 + 1.0, y0 + 1.0);
    }
    v
}

/// Intensity of neighbour `idx` of `count` on a ring of `radius` around (x, y).
pub fn ring_sample(img: &GrayImage, x: usize, y: usize, radius: f64, count: usize, idx: usize) -> f64 {
    let theta = std::f64::consts::TAU * idx as f64 / count as f64;
    let sx = near_integer(x as f64 + radius * theta.cos());
    let sy = near_integer(y as f64 - radius * theta.sin());
    bilinear(img, sx, sy)
}

/// Descriptor codes at one pixel, enumerating every (η, i) triplet literally:
/// k = mod(η,2)+1, ψ(k) = ⌊k/2⌋ + 2·mod(k,2), the anchor on ring k at index i·k,
/// the partners on the other ring at mod(ψ(k)·i + (−1)^k, ψ(k)·p) and ψ(k)·i + mod(k,2).
pub fn triplet_codes(img: &GrayImage, x: usize, y: usize, rp: &RingParams) -> [u8; 4] {
    let p = rp.p as i64;
    let radius = |ring: i64| if ring == 1 { rp.r1 } else { rp.r2 };
    let count = |ring: i64| if ring == 1 { p } else { 2 * p };
    let mut codes = [0u8; 4];
    for eta in 1..=4i64 {
        let k = eta.rem_euclid(2) + 1;
        let psi = k / 2 + 2 * k.rem_euclid(2);
        let sign = if k % 2 == 0 { 1 } else { -1 };
        let other = k - sign; // r_{k - (-1)^k}
        let mut code = 0u32;
        for i in 0..p {
            let anchor_idx = i * k;
            let f2 = (psi * i + sign).rem_euclid(psi * p);
            let f3 = psi * i + k.rem_euclid(2);
            let sample = |ring: i64, idx: i64| {
                let n = count(ring);
                assert!((0..n).contains(&idx), "index {idx} outside ring {ring}");
                ring_sample(img, x, y, radius(ring), n as usize, idx as usize)
            };
            let anchor = sample(k, anchor_idx);
            let t = anchor - sample(other, f2);
            let u = anchor - sample(other, f3);
            let bit = if (eta + 1) / 2 == 1 { t > 0.0 && u > 0.0 } else { t < 0.0 && u < 0.0 };
            if bit {
                code += 1 << i;
            }
        }
        codes[(eta - 1) as usize] = code as u8;
    }
    codes
}

/// All four code maps of an image, computed pixel by pixel with [`triplet_codes`].
pub fn triplet_maps(img: &GrayImage, rp: &RingParams) -> [Vec<u8>; 4] {
    let mut maps: [Vec<u8>; 4] = Default::default();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let c = triplet_codes(img, x, y, rp);
            for eta in 0..4 {
                maps[eta].push(c[eta]);
            }
        }
    }
    maps
}

/// Height × width × channels feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct Map {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl Map {
    pub fn new(h: usize, w: usize, c: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), h * w * c);
        Self { h, w, c, data }
    }

    pub fn at(&self, y: usize, x: usize, ch: usize) -> f64 {
        self.data[(y * self.w + x) * self.c + ch]
    }

    pub fn relu(&self) -> Map {
        Map::new(self.h, self.w, self.c, self.data.iter().map(|v| v.max(0.0)).collect())
    }

    pub fn zip(&self, other: &Map, f: impl Fn(f64, f64) -> f64) -> Map {
        assert_eq!((self.h, self.w, self.c), (other.h, other.w, other.c));
        Map::new(self.h, self.w, self.c, self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect())
    }

    pub fn plus(&self, other: &Map) -> Map {
        self.zip(other, |a, b| a + b)
    }

    pub fn minus(&self, other: &Map) -> Map {
        self.zip(other, |a, b| a - b)
    }
}

pub fn concat(parts: &[&Map]) -> Map {
    let (h, w) = (parts[0].h, parts[0].w);
    let c: usize = parts.iter().map(|m| m.c).sum();
    let mut data = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            for m in parts {
                assert_eq!((m.h, m.w), (h, w));
                for ch in 0..m.c {
                    data.push(m.at(y, x, ch));
                }
            }
        }
    }
    Map::new(h, w, c, data)
}

/// Direct convolution: output side ceil(n/s), total padding
/// max(0, (out−1)·s + z − n) with the smaller half before.
/// Weights are indexed [ky][kx][ci][co].
pub fn naive_conv(input: &Map, weights: &[f64], bias: &[f64], z: usize, cout: usize, s: usize) -> Map {
    assert_eq!(weights.len(), z * z * input.c * cout);
    let oh = (input.h + s - 1) / s;
    let ow = (input.w + s - 1) / s;
    let pad = |n: usize, o: usize| ((o - 1) * s + z).saturating_sub(n) / 2;
    let (ph, pw) = (pad(input.h, oh) as i64, pad(input.w, ow) as i64);
    let mut out = vec![0.0; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            for co in 0..cout {
                let mut acc = bias[co];
                for ky in 0..z {
                    for kx in 0..z {
                        let iy = (oy * s + ky) as i64 - ph;
                        let ix = (ox * s + kx) as i64 - pw;
                        if iy < 0 || ix < 0 || iy >= input.h as i64 || ix >= input.w as i64 {
                            continue;
                        }
                        for ci in 0..input.c {
                            let wv = weights[((ky * z + kx) * input.c + ci) * cout + co];
                            acc += input.at(iy as usize, ix as usize, ci) * wv;
                        }
                    }
                }
                out[(oy * ow + ox) * cout + co] = acc;
            }
        }
    }
    Map::new(oh, ow, cout, out)
}

/// 2×2 stride-2 mean with ceil output; edge cells average the pixels present.
pub fn naive_avg_pool(m: &Map) -> Map {
    let (oh, ow) = ((m.h + 1) / 2, (m.w + 1) / 2);
    let mut data = Vec::with_capacity(oh * ow * m.c);
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..m.c {
                let mut sum = 0.0;
                let mut n = 0.0;
                for y in 2 * oy..(2 * oy + 2).min(m.h) {
                    for x in 2 * ox..(2 * ox + 2).min(m.w) {
                        sum += m.at(y, x, ch);
                        n += 1.0;
                    }
                }
                data.push(sum / n);
            }
        }
    }
    Map::new(oh, ow, m.c, data)
}

pub fn map_of(t: &rarity::Tensor) -> Map {
    let s = t.shape();
    Map::new(s[0], s[1], s[2], t.data().to_vec())
}

/// Convolution layer `layer` of `model` applied with [`naive_conv`].
pub fn layer(model: &Model, name: &str, x: &Map) -> Map {
    let spec = model.topology().conv(name).unwrap();
    let w = model.param(&format!("{name}.weight")).unwrap();
    let b = model.param(&format!("{name}.bias")).unwrap();
    assert_eq!(w.shape(), &[spec.kernel, spec.kernel, x.c, spec.out_channels]);
    naive_conv(x, w.data(), b.data(), spec.kernel, spec.out_channels, spec.stride)
}

/// HBEF stream written out layer by layer.
pub fn hbef_oracle(model: &Model, image: &Map, rarity: &[Map; 4]) -> Map {
    let l = [layer(model, "hbef.l1", image).relu(), layer(model, "hbef.l2", image).relu()];
    let lateral: Vec<Map> = (0..4).map(|r| layer(model, &format!("hbef.rarity{r}"), &rarity[r]).relu()).collect();
    let s_b: Vec<Map> = (0..8).map(|b| l[b / 4].minus(&lateral[b % 4])).collect();
    let s = concat(&s_b.iter().collect::<Vec<_>>());
    let left = s.minus(&layer(model, "hbef.refine3", &l[0]).relu());
    let right = s.minus(&layer(model, "hbef.refine7", &l[1]).relu());
    concat(&[&left, &right])
}

/// MSSEC stream written out layer by layer; returns (A1, A2, output).
pub fn mssec_oracle(model: &Model, h: &Map) -> (Map, Map, Map) {
    let sum = |maps: Vec<Map>| maps.into_iter().reduce(|a, b| a.plus(&b)).unwrap();
    let a1_main = sum([3, 5, 7].iter().map(|z| layer(model, &format!("mssec.a1.k{z}"), h)).collect()).relu();
    let a1 = a1_main.plus(&layer(model, "mssec.a1.proj", &naive_avg_pool(h)));
    let a2 = sum([1, 3, 5, 7].iter().map(|z| layer(model, &format!("mssec.a2.k{z}"), &a1)).collect()).relu();
    let mut branches: Vec<Map> = [1, 3, 5, 7].iter().map(|z| layer(model, &format!("mssec.out.k{z}"), &a2)).collect();
    branches.push(layer(model, "mssec.skip", &a1));
    (a1.clone(), a2.clone(), sum(branches).relu())
}

/// RUCCF stream written out layer by layer: (mean, max, sum) summaries.
pub fn ruccf_oracle(model: &Model, rarity: &[Map; 4]) -> [Vec<f64>; 3] {
    let q: Vec<Map> = (0..4).map(|t| layer(model, &format!("ruccf.q{t}"), &rarity[t]).relu()).collect();
    let (h, w, c) = (q[0].h, q[0].w, q[0].c);
    let mut out = [vec![0.0; c], vec![0.0; c], vec![0.0; c]];
    for ch in 0..c {
        let (mut mean, mut max, mut add) = (0.0, 0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                let v: Vec<f64> = q.iter().map(|m| m.at(y, x, ch)).collect();
                let s: f64 = v.iter().sum();
                mean += s / 4.0;
                max += v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                add += s;
            }
        }
        let n = (h * w) as f64;
        out[0][ch] = mean / n;
        out[1][ch] = max / n;
        out[2][ch] = add / n;
    }
    out
}

/// Largest absolute difference relative to the largest reference magnitude.
pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = got.iter().zip(want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
