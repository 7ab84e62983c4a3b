use proptest::prelude::*;
use rand::Rng;
use tda_stitch::dataset::{GrayImage, SIDE};
use tda_stitch::rng::{self, StreamRng};
use tda_stitch::vectorize::{
    compute_pi_stack, image_diagrams, persistence_image, stitch, tda_input, PersistenceSurfaceParams, Weight,
};
use tda_stitch::{PersistenceDiagram, PersistencePair, PipelineConfig, TrainingStats};

fn random_diagram(r: &mut StreamRng, lo: f64, hi: f64) -> PersistenceDiagram {
    let n = r.gen_range(1..=12);
    let pairs = (0..n)
        .map(|_| {
            // both plotted coordinates, birth and persistence, in [lo, hi)
            let birth = r.gen_range(lo..hi);
            let death = birth + r.gen_range(lo..hi);
            PersistencePair { birth, death, dim: 0, essential: false }
        })
        .collect();
    PersistenceDiagram { dim: 0, pairs, max_value: 2.0 * hi }
}

#[test]
fn mass_of_interior_points() {
    let mut r = rng::stream(1, "mass", &[]);
    for case in 0..100 {
        let sigma = r.gen_range(0.02..0.06);
        let range = 1.05;
        let params = PersistenceSurfaceParams { resolution: 28, sigma, range, weight: Weight::Linear { max_persistence: range } };
        let d = random_diagram(&mut r, 6.0 * sigma, range - 6.0 * sigma);
        let expected: f64 = d.pairs.iter().map(|p| params.weight.at(p.persistence())).sum();
        let mass: f64 = persistence_image(&d, &params).iter().sum();
        assert!(mass >= 0.99 * expected && mass <= expected * (1.0 + 1e-12), "case {case}: {mass} vs {expected}");
    }
}

#[test]
fn union_is_additive() {
    let mut r = rng::stream(2, "union", &[]);
    let params = PersistenceSurfaceParams { resolution: 28, sigma: 0.1, range: 1.05, weight: Weight::Linear { max_persistence: 0.8 } };
    for _ in 0..100 {
        let a = random_diagram(&mut r, 0.0, 0.5);
        let b = random_diagram(&mut r, 0.0, 0.5);
        let mut u = a.clone();
        u.pairs.extend(&b.pairs);
        let (ia, ib, iu) = (persistence_image(&a, &params), persistence_image(&b, &params), persistence_image(&u, &params));
        for ((x, y), z) in ia.iter().zip(&ib).zip(&iu) {
            assert!((x + y - z).abs() <= 1e-10);
        }
    }
}

fn ring_image() -> GrayImage {
    let px = (0..SIDE * SIDE)
        .map(|i| {
            let (y, x) = ((i / SIDE) as f64 - 13.5, (i % SIDE) as f64 - 13.5);
            let r = x.hypot(y);
            if (6.0..9.0).contains(&r) { 1.0 } else { 0.0 }
        })
        .collect();
    GrayImage::new(SIDE, SIDE, px).unwrap()
}

#[test]
fn stack_and_stitch_shapes() {
    let config = PipelineConfig::default();
    let img = ring_image();
    let stats = TrainingStats::from_diagrams([&image_diagrams(&img, &config)]);
    let stack = compute_pi_stack(&img, &config, &stats);
    assert_eq!((stack.channels(), stack.resolution()), (34, 28));
    assert_eq!(tda_input(&stack).channels(), 34);
    let stitched = stitch(&img, &stack).unwrap();
    assert_eq!(stitched.channels(), 35);
    assert_eq!(stitched.channel(0), img.pixels());
    // a ring has a loop under every filtration
    for f in 0..17 {
        assert!(stack.channel(2 * f + 1).iter().any(|&v| v > 0.0), "filtration {f}");
    }
}

#[test]
fn black_image_gives_empty_channels() {
    let config = PipelineConfig::default();
    let stack = compute_pi_stack(&GrayImage::black(), &config, &TrainingStats::identity());
    assert_eq!(stack.channels(), 34);
    assert!(stack.data().iter().all(|&v| v == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn stacks_are_finite_and_nonnegative(seed in any::<u64>(), density in 0.05f64..0.6) {
        let mut r = rng::stream(seed, "img", &[]);
        let px = (0..SIDE * SIDE).map(|_| if r.gen_bool(density) { r.gen_range(0.0..1.0f32) } else { 0.0 }).collect();
        let img = GrayImage::new(SIDE, SIDE, px).unwrap();
        let config = PipelineConfig::default();
        let ds = image_diagrams(&img, &config);
        let stack = compute_pi_stack(&img, &config, &TrainingStats::from_diagrams([&ds]));
        prop_assert_eq!(stack.channels(), 34);
        prop_assert!(stack.data().iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}
