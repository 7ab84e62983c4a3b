use proptest::prelude::*;
use rand::Rng;
use tda_stitch::persistence::{
    build_cubical_complex, check_against_oracle, complex_diagrams, diagrams, rips_filtration, FilteredComplex,
};
use tda_stitch::{rng, FilteredImage};

fn binary_3x3(bits: u32) -> FilteredImage {
    FilteredImage::new(3, 3, (0..9).map(|i| f64::from((bits >> i) & 1)).collect())
}

#[test]
fn every_binary_3x3_matches_oracle() {
    for bits in 0..512 {
        let k = build_cubical_complex(&binary_3x3(bits));
        check_against_oracle(&k).unwrap_or_else(|e| panic!("image {bits:09b}: {e:?}"));
    }
}

#[test]
fn graded_5x5_match_oracle() {
    let mut r = rng::stream(5, "graded", &[]);
    for case in 0..200 {
        // few grades, so ties between pixels are common
        let grades = r.gen_range(2..=6);
        let v = (0..25).map(|_| f64::from(r.gen_range(0..grades))).collect();
        let k = build_cubical_complex(&FilteredImage::new(5, 5, v));
        check_against_oracle(&k).unwrap_or_else(|e| panic!("case {case}: {e:?}"));
    }
}

#[test]
fn unit_square_rips_loop() {
    let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let (_, h1) = complex_diagrams(&rips_filtration(&sq, 2.0).unwrap()).unwrap();
    assert_eq!(h1.pairs.len(), 1);
    assert!((h1.pairs[0].birth - 1.0).abs() < 1e-9);
    assert!((h1.pairs[0].death - 2f64.sqrt()).abs() < 1e-9);
    assert!(!h1.pairs[0].essential);
}

#[test]
fn random_clouds_match_oracle() {
    let mut r = rng::stream(9, "clouds", &[]);
    for case in 0..20 {
        let n = r.gen_range(1..=10);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [r.gen(), r.gen()]).collect();
        let k = rips_filtration(&pts, 2.0).unwrap();
        check_against_oracle(&k).unwrap_or_else(|e| panic!("cloud {case}: {e:?}"));
    }
}

#[test]
fn full_grid_has_one_component_in_the_end() {
    let mut r = rng::stream(3, "grid", &[]);
    let v: Vec<f64> = (0..28 * 28).map(|_| r.gen()).collect();
    let (h0, h1) = diagrams(&FilteredImage::new(28, 28, v));
    assert_eq!(h0.pairs.iter().filter(|p| p.essential).count(), 1);
    assert!(h1.pairs.iter().all(|p| !p.essential));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_images_match_oracle(h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
        let mut r = rng::stream(seed, "prop", &[]);
        let v = (0..h * w).map(|_| f64::from(r.gen_range(0..8u8))).collect();
        let k = build_cubical_complex(&FilteredImage::new(h, w, v));
        prop_assert!(check_against_oracle(&k).is_ok());
    }

    #[test]
    fn shift_moves_every_pair(seed in any::<u64>(), c in -5.0f64..5.0) {
        let mut r = rng::stream(seed, "shift", &[]);
        let f = FilteredImage::new(4, 4, (0..16).map(|_| r.gen_range(0.0..1.0)).collect());
        let (a0, a1) = diagrams(&f);
        let (b0, b1) = diagrams(&f.shifted(c));
        for (a, b) in [(a0, b0), (a1, b1)] {
            prop_assert_eq!(a.pairs.len(), b.pairs.len());
            for (p, q) in a.pairs.iter().zip(&b.pairs) {
                prop_assert!((p.birth + c - q.birth).abs() < 1e-9 && (p.death + c - q.death).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pairs_never_die_before_birth(seed in any::<u64>()) {
        let mut r = rng::stream(seed, "order", &[]);
        let f = FilteredImage::new(6, 6, (0..36).map(|_| r.gen_range(0.0..1.0)).collect());
        let k = build_cubical_complex(&f);
        let (h0, h1) = complex_diagrams(&k).unwrap();
        for p in h0.pairs.iter().chain(&h1.pairs) {
            prop_assert!(p.birth < p.death && p.death <= k.max_value());
        }
    }
}
