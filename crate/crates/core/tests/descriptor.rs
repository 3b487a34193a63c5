mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rarity::evalharness::SyntheticSpec;
use rarity::imagio::GrayImage;
use rarity::rarity::{
    block_histograms, encode_lbp, encode_rarity, featurize, l1_distance, l1_slices, sample_ring, DescriptorError,
    FeatureVector, RarityResponse, RingParams,
};

fn rp() -> RingParams {
    RingParams::default()
}

fn swap_polarity(r: &RarityResponse) -> [Vec<u8>; 4] {
    let m = r.maps();
    [m[2].clone(), m[3].clone(), m[0].clone(), m[1].clone()]
}

#[test]
fn ring_params_defaults_and_validation() {
    let d = rp();
    assert_eq!((d.r1, d.r2, d.p, d.q()), (1.0, 2.0, 8, 16));
    assert!(RingParams::new(2.0, 1.0, 8).is_err());
    assert!(RingParams::new(0.0, 1.0, 8).is_err());
    assert!(RingParams::new(1.0, 2.0, 3).is_err());
    assert!(RingParams::new(1.0, 2.0, 9).is_err());
    assert!(RingParams::new(1.5, 3.0, 4).is_ok());
}

#[test]
fn ring_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = common::random_image(&mut rng, 7, 7, 0.0, 255.0);
    assert_eq!(sample_ring(&img, 3, 3, 1.0, 8, 0).unwrap(), img.get(4, 3));
    // Index 2 of 8 points straight up (towards row 2).
    assert_eq!(sample_ring(&img, 3, 3, 1.0, 8, 2).unwrap(), img.get(3, 2));
    assert!(matches!(
        sample_ring(&img, 3, 3, 1.0, 8, 8),
        Err(DescriptorError::IndexOutOfRange { idx: 8, count: 8 })
    ));

    let flat = GrayImage::filled(6, 6, 77.7);
    for (radius, count) in [(1.0, 8), (2.0, 16), (1.5, 4)] {
        for idx in 0..count {
            assert_eq!(sample_ring(&flat, 2, 3, radius, count, idx).unwrap(), 77.7);
        }
    }

    let ramp = GrayImage::from_fn(9, 9, |x, _| 20.0 * x as f64);
    let got = sample_ring(&ramp, 4, 4, 2.0, 16, 1).unwrap();
    let want = 20.0 * (4.0 + 2.0 * 22.5f64.to_radians().cos());
    assert!((got - want).abs() < 1e-9);
    assert!((got - common::ring_sample(&ramp, 4, 4, 2.0, 16, 1)).abs() < 1e-9);
}

#[test]
fn constant_image_has_zero_codes() {
    let r = encode_rarity(&GrayImage::filled(9, 8, 140.0), &rp()).unwrap();
    assert!(r.maps().iter().all(|m| m.len() == 72 && m.iter().all(|&c| c == 0)));
}

#[test]
fn bright_centre_patch() {
    let img = GrayImage::from_fn(5, 5, |x, y| if (x, y) == (2, 2) { 90.0 } else { 10.0 });
    let r = encode_rarity(&img, &rp()).unwrap();
    let want = common::triplet_codes(&img, 2, 2, &rp());
    let got: Vec<u8> = (0..4).map(|eta| r.code(eta, 2, 2)).collect();
    assert_eq!(got, want.to_vec());
    // The centre pixel never takes part, and the two rings around it see the
    // bright pixel only through inner samples that lean towards it. Inner
    // anchors at the four diagonals pick up a share of it while their outer
    // partners do not, setting bits 1, 3, 5 and 7 of the second map.
    assert_eq!(want, [0, 0b1010_1010, 0, 0]);
}

#[test]
fn encoder_matches_triplet_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..12 {
        let (w, h) = (rng.gen_range(5..12), rng.gen_range(5..12));
        let img = common::random_image(&mut rng, w, h, 0.0, 255.0);
        let params = match case % 3 {
            0 => rp(),
            1 => RingParams::new(1.5, 3.0, 6).unwrap(),
            _ => RingParams::new(1.0, 2.5, 4).unwrap(),
        };
        if w < params.min_side() || h < params.min_side() {
            continue;
        }
        let r = encode_rarity(&img, &params).unwrap();
        assert_eq!(r.maps(), &common::triplet_maps(&img, &params), "case {case}");
    }
}

#[test]
fn encoder_rejects_small_images() {
    assert!(matches!(
        encode_rarity(&GrayImage::filled(4, 9, 0.0), &rp()),
        Err(DescriptorError::ImageTooSmall { min: 5, .. })
    ));
}

#[test]
fn codes_fit_eight_bits_and_dump_as_pgm() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let img = common::random_image(&mut rng, 16, 12, 0.0, 255.0);
    let r = encode_rarity(&img, &rp()).unwrap();
    for eta in 0..4 {
        let dumped = r.to_image(eta);
        assert_eq!((dumped.width(), dumped.height()), (16, 12));
        let bytes = rarity::imagio::save_pgm(&dumped);
        assert_eq!(&bytes[bytes.len() - 16 * 12..], r.map(eta));
    }
    let small = encode_rarity(&img, &RingParams::new(1.0, 2.0, 4).unwrap()).unwrap();
    assert!(small.maps().iter().flatten().all(|&c| c < 16));
}

#[test]
fn encoder_is_schedule_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let img = common::random_image(&mut rng, 40, 33, 0.0, 255.0);
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = serial.install(|| encode_rarity(&img, &rp()).unwrap());
    let b = wide.install(|| encode_rarity(&img, &rp()).unwrap());
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn offset_invariance(seed in any::<u64>(), c in -60.0f64..60.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = common::random_image(&mut rng, 9, 9, 60.0, 190.0);
        let shifted = img.map(|v| v + c);
        prop_assert_eq!(encode_rarity(&img, &rp()).unwrap(), encode_rarity(&shifted, &rp()).unwrap());
    }

    #[test]
    fn scale_invariance(seed in any::<u64>(), s in 0.1f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = common::random_image(&mut rng, 9, 9, 0.0, 127.0);
        let scaled = img.map(|v| v * s);
        prop_assert_eq!(encode_rarity(&img, &rp()).unwrap(), encode_rarity(&scaled, &rp()).unwrap());
    }

    #[test]
    fn inversion_swaps_polarity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = common::random_image(&mut rng, 10, 8, 0.0, 255.0);
        let a = encode_rarity(&img, &rp()).unwrap();
        let b = encode_rarity(&img.map(|v| 255.0 - v), &rp()).unwrap();
        prop_assert_eq!(&swap_polarity(&a), b.maps());
        prop_assert_eq!(&swap_polarity(&b), a.maps());
    }

    #[test]
    fn histogram_mass_is_conserved(seed in any::<u64>(), w in 5usize..20, h in 5usize..20, grid in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = common::random_image(&mut rng, w, h, 0.0, 255.0);
        let r = encode_rarity(&img, &rp()).unwrap();
        let fv = block_histograms(&r, grid).unwrap();
        prop_assert_eq!(fv.len(), 4 * grid * grid * 256);
        prop_assert_eq!(fv.values.iter().sum::<f64>(), (4 * w * h) as f64);
        for eta in 0..4 {
            for row in 0..grid {
                for col in 0..grid {
                    // Remainder pixels belong to the last block row/column.
                    let span = |n: usize, i: usize| {
                        let base = n / grid;
                        if i + 1 == grid { n - base * i } else { base }
                    };
                    let pixels = span(h, row) * span(w, col);
                    prop_assert_eq!(fv.block(eta, row, col).iter().sum::<f64>(), pixels as f64);
                }
            }
        }
    }
}

#[test]
fn lbp_baseline() {
    let flat = encode_lbp(&GrayImage::filled(5, 5, 30.0), 1.0, 8).unwrap();
    assert!(flat.codes.iter().all(|&c| c == 255));
    let peak = GrayImage::from_fn(5, 5, |x, y| if (x, y) == (2, 2) { 255.0 } else { 40.0 });
    assert_eq!(encode_lbp(&peak, 1.0, 8).unwrap().codes[2 * 5 + 2], 0);

    // 3×3 patch; with radius 1 and four neighbours the samples land on grid points.
    let patch = GrayImage::new(3, 3, vec![5.0, 9.0, 1.0, 7.0, 6.0, 6.0, 2.0, 3.0, 8.0]).unwrap();
    let lbp = encode_lbp(&patch, 1.0, 4).unwrap();
    // Neighbours of the centre (6): east 6, north 9, west 7, south 3.
    let want = [6.0 >= 6.0, 9.0 >= 6.0, 7.0 >= 6.0, 3.0 >= 6.0]
        .iter()
        .enumerate()
        .map(|(i, &b)| (b as u8) << i)
        .sum::<u8>();
    assert_eq!(lbp.codes[4], want);
    assert_eq!(want, 0b0111);
    assert!(encode_lbp(&patch, 1.0, 9).is_err());
}

#[test]
fn checkerboard_histograms() {
    let codes: Vec<u8> = (0..64).map(|i| if (i / 8 + i % 8) % 2 == 0 { 0 } else { 255 }).collect();
    let r = RarityResponse::from_maps(8, 8, 8, [codes.clone(), codes.clone(), codes.clone(), codes]).unwrap();
    let fv = block_histograms(&r, 2).unwrap();
    for eta in 0..4 {
        for row in 0..2 {
            for col in 0..2 {
                let b = fv.block(eta, row, col);
                assert_eq!((b[0], b[255]), (8.0, 8.0));
                assert_eq!(b.iter().sum::<f64>(), 16.0);
            }
        }
    }
    let zeros = RarityResponse::from_maps(6, 4, 8, [vec![0; 24], vec![0; 24], vec![0; 24], vec![0; 24]]).unwrap();
    let fv = block_histograms(&zeros, 1).unwrap();
    for eta in 0..4 {
        assert_eq!(fv.block(eta, 0, 0)[0], 24.0);
        assert_eq!(fv.block(eta, 0, 0)[1..].iter().sum::<f64>(), 0.0);
    }
    assert!(block_histograms(&zeros, 5).is_err());
    assert!(block_histograms(&zeros, 0).is_err());
}

#[test]
fn manhattan_distance() {
    assert_eq!(l1_slices(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), 4.0);
    assert!(matches!(l1_slices(&[1.0], &[1.0, 2.0]), Err(DescriptorError::LengthMismatch { left: 1, right: 2 })));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let img = common::random_image(&mut rng, 20, 20, 0.0, 255.0);
    let v = featurize(&img, &rp(), 4).unwrap();
    assert_eq!(v.len(), 16384);
    assert_eq!(l1_distance(&v, &v).unwrap(), 0.0);
    let small = featurize(&img, &rp(), 2).unwrap();
    assert!(l1_distance(&v, &small).is_err());
}

#[test]
fn feature_json_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let v = featurize(&common::random_image(&mut rng, 12, 12, 0.0, 255.0), &rp(), 3).unwrap();
    let json = v.to_json();
    let back = FeatureVector::from_json(&json).unwrap();
    assert_eq!(back, v);
    let header: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(header["grid"], 3);
    assert_eq!(header["p"], 8);
    assert_eq!(header["eta_count"], 4);
}

#[test]
fn intra_class_closer_than_inter_class() {
    let data = SyntheticSpec::default().generate();
    let feats: Vec<FeatureVector> = data.images.iter().map(|i| featurize(i, &rp(), 4).unwrap()).collect();
    let labels: Vec<usize> = data.index.entries.iter().map(|e| e.label).collect();
    let (mut intra, mut inter) = ((0.0, 0usize), (0.0, 0usize));
    for i in 0..feats.len() {
        for j in i + 1..feats.len() {
            let d = l1_distance(&feats[i], &feats[j]).unwrap();
            let slot = if labels[i] == labels[j] { &mut intra } else { &mut inter };
            slot.0 += d;
            slot.1 += 1;
        }
    }
    let (intra, inter) = (intra.0 / intra.1 as f64, inter.0 / inter.1 as f64);
    assert!(intra < inter, "intra {intra} vs inter {inter}");
}
