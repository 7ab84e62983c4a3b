//! Persistence images and the stitched network input.
//!
//! Diagrams are mapped to `(birth, persistence)` coordinates, each point is
//! spread with an isotropic Gaussian weighted by its persistence, and the
//! resulting surface is integrated exactly over a `P x P` pixel grid
//! covering `[0, range]^2`. Column `j` of an image spans births in
//! `[j, j+1) * range / P`, row `i` spans persistences in `[i, i+1) * range / P`.
//!
//! Scaling and weighting depend on statistics of the training diagrams
//! ([`TrainingStats`]), which are computed once per training set and then
//! reused unchanged for the test images.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::GrayImage;
use crate::filtration::{self, FiltrationSpec, FILTRATION_COUNT};
use crate::persistence::{self, PersistenceDiagram, PersistencePair};

/// 17 filtrations x {H0, H1}.
pub const PI_CHANNELS: usize = 2 * FILTRATION_COUNT;

#[derive(Debug, Error, PartialEq)]
pub enum VectorizeError {
    #[error("scale factor is zero; every training diagram is empty")]
    DegenerateScale,
    #[error("persistence images are {found}x{found}, stitching needs {expected}x{expected}")]
    ResolutionMismatch { expected: usize, found: usize },
    #[error("expected {expected} diagrams, got {found}")]
    ChannelCount { expected: usize, found: usize },
}

/// Settings for the image -> persistence-image pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub threshold: f64,
    pub resolution: usize,
    /// Gaussian bandwidth in scaled units.
    pub sigma: f64,
    /// Upper end of the rendering window `[0, window]^2`, scaled units.
    pub window: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { threshold: filtration::DEFAULT_THRESHOLD, resolution: 28, sigma: 0.1, window: 1.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weight {
    /// Every point weighs 1.
    Unit,
    /// `min(persistence / max_persistence, 1)`.
    Linear { max_persistence: f64 },
}

impl Weight {
    pub fn at(&self, persistence: f64) -> f64 {
        match *self {
            Weight::Unit => 1.0,
            Weight::Linear { max_persistence } => (persistence / max_persistence).clamp(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersistenceSurfaceParams {
    pub resolution: usize,
    pub sigma: f64,
    pub range: f64,
    pub weight: Weight,
}

impl PersistenceSurfaceParams {
    fn pixel_width(&self) -> f64 {
        self.range / self.resolution as f64
    }
}

/// Weighted points `(x = birth, y = persistence, w)` in a canonical order,
/// so accumulation does not depend on the order pairs were listed in.
fn weighted_points(d: &PersistenceDiagram, weight: &Weight) -> Vec<(f64, f64, f64)> {
    let mut pts: Vec<(f64, f64, f64)> = d
        .pairs
        .iter()
        .map(|p| (p.birth, p.persistence(), weight.at(p.persistence())))
        .filter(|&(_, _, w)| w > 0.0)
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts
}

/// The persistence surface evaluated at `(x, y)`.
pub fn surface_value(d: &PersistenceDiagram, params: &PersistenceSurfaceParams, x: f64, y: f64) -> f64 {
    let s2 = params.sigma * params.sigma;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * s2);
    weighted_points(d, &params.weight)
        .iter()
        .map(|&(px, py, w)| w * norm * (-((x - px).powi(2) + (y - py).powi(2)) / (2.0 * s2)).exp())
        .sum()
}

/// Surface samples at the pixel centres, row-major.
pub fn persistence_surface(d: &PersistenceDiagram, params: &PersistenceSurfaceParams) -> Vec<f64> {
    let p = params.resolution;
    let dx = params.pixel_width();
    (0..p * p)
        .map(|k| {
            let (i, j) = (k / p, k % p);
            surface_value(d, params, (j as f64 + 0.5) * dx, (i as f64 + 0.5) * dx)
        })
        .collect()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Gaussian mass of each of the `P` intervals along one axis.
fn axis_masses(center: f64, params: &PersistenceSurfaceParams, out: &mut Vec<f64>) {
    let dx = params.pixel_width();
    out.clear();
    let mut prev = normal_cdf((0.0 - center) / params.sigma);
    for k in 1..=params.resolution {
        let next = normal_cdf((k as f64 * dx - center) / params.sigma);
        out.push(next - prev);
        prev = next;
    }
}

/// Exact pixel integrals of the persistence surface, row-major `P x P`.
pub fn persistence_image(d: &PersistenceDiagram, params: &PersistenceSurfaceParams) -> Vec<f64> {
    let p = params.resolution;
    let mut image = vec![0.0; p * p];
    let (mut gx, mut gy) = (Vec::with_capacity(p), Vec::with_capacity(p));
    for (x, y, w) in weighted_points(d, &params.weight) {
        axis_masses(x, params, &mut gx);
        axis_masses(y, params, &mut gy);
        for (row, &my) in image.chunks_exact_mut(p).zip(&gy) {
            let wy = w * my;
            for (px, &mx) in row.iter_mut().zip(&gx) {
                *px += wy * mx;
            }
        }
    }
    image
}

/// The 34 diagrams of one image: filtration-major, H0 before H1.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDiagrams {
    pub diagrams: Vec<PersistenceDiagram>,
}

impl ImageDiagrams {
    /// Rows `[channel, birth, death, essential]`, for caching.
    pub fn to_rows(&self) -> Vec<f64> {
        self.diagrams
            .iter()
            .enumerate()
            .flat_map(|(ch, d)| {
                d.pairs.iter().flat_map(move |p| [ch as f64, p.birth, p.death, f64::from(u8::from(p.essential))])
            })
            .collect()
    }

    /// Inverse of [`to_rows`](Self::to_rows). A diagram's `max_value` is
    /// restored as its largest death.
    pub fn from_rows(rows: &[f64]) -> Self {
        let mut diagrams: Vec<PersistenceDiagram> = (0..PI_CHANNELS).map(|ch| PersistenceDiagram::empty(ch % 2)).collect();
        for row in rows.chunks_exact(4) {
            let ch = row[0] as usize;
            let d = &mut diagrams[ch];
            d.pairs.push(PersistencePair { birth: row[1], death: row[2], dim: ch % 2, essential: row[3] != 0.0 });
            d.max_value = d.max_value.max(row[2]);
        }
        Self { diagrams }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { diagrams: self.diagrams.iter().map(|d| d.scaled(s)).collect() }
    }
}

/// Binarize, apply the 17 standard filtrations and compute H0/H1 diagrams.
pub fn image_diagrams(img: &GrayImage, config: &PipelineConfig) -> ImageDiagrams {
    image_diagrams_with(img, config, &filtration::standard_filtrations())
}

pub fn image_diagrams_with(img: &GrayImage, config: &PipelineConfig, filtrations: &[FiltrationSpec]) -> ImageDiagrams {
    let binary = filtration::binarize(img, config.threshold);
    let diagrams = filtrations
        .iter()
        .flat_map(|spec| {
            let (h0, h1) = persistence::diagrams(&spec.apply(&binary));
            [h0, h1]
        })
        .collect();
    ImageDiagrams { diagrams }
}

/// Divide every diagram of an image by `s`.
pub fn scale_diagrams(ds: &ImageDiagrams, s: f64) -> Result<ImageDiagrams, VectorizeError> {
    if s == 0.0 {
        return Err(VectorizeError::DegenerateScale);
    }
    Ok(ds.scaled(s))
}

/// Statistics of the training diagrams that fix scaling and weighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    /// Global scale factor: the largest death over all training diagrams.
    pub scale: f64,
    /// Per-channel largest persistence after scaling.
    pub max_persistence: Vec<f64>,
}

impl TrainingStats {
    pub fn from_diagrams<'a>(training: impl IntoIterator<Item = &'a ImageDiagrams> + Clone) -> Self {
        let max_death = training
            .clone()
            .into_iter()
            .flat_map(|d| d.diagrams.iter().flat_map(|d| d.pairs.iter().map(|p| p.death)))
            .fold(0.0, f64::max);
        let scale = if max_death > 0.0 { max_death } else { 1.0 };
        let mut max_persistence = vec![0.0f64; PI_CHANNELS];
        for img in training {
            for (m, d) in max_persistence.iter_mut().zip(&img.diagrams) {
                for p in &d.pairs {
                    *m = m.max(p.persistence() / scale);
                }
            }
        }
        for m in &mut max_persistence {
            if *m <= 0.0 {
                *m = 1.0;
            }
        }
        Self { scale, max_persistence }
    }

    pub fn identity() -> Self {
        Self { scale: 1.0, max_persistence: vec![1.0; PI_CHANNELS] }
    }
}

/// 34 persistence-image channels of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct PIStack {
    resolution: usize,
    data: Vec<f32>,
}

impl PIStack {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn channels(&self) -> usize {
        self.data.len() / (self.resolution * self.resolution)
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.resolution * self.resolution;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// `(filtration index, homology dimension)` of channel `c`.
    pub fn provenance(c: usize) -> (usize, usize) {
        (c / 2, c % 2)
    }
}

/// Scale with the training statistics and render all 34 channels.
pub fn render_stack(ds: &ImageDiagrams, stats: &TrainingStats, config: &PipelineConfig) -> Result<PIStack, VectorizeError> {
    if ds.diagrams.len() != PI_CHANNELS {
        return Err(VectorizeError::ChannelCount { expected: PI_CHANNELS, found: ds.diagrams.len() });
    }
    let scaled = scale_diagrams(ds, stats.scale)?;
    let mut data = Vec::with_capacity(PI_CHANNELS * config.resolution * config.resolution);
    for (d, &max_persistence) in scaled.diagrams.iter().zip(&stats.max_persistence) {
        let params = PersistenceSurfaceParams {
            resolution: config.resolution,
            sigma: config.sigma,
            range: config.window,
            weight: Weight::Linear { max_persistence },
        };
        data.extend(persistence_image(d, &params).into_iter().map(|v| v as f32));
    }
    Ok(PIStack { resolution: config.resolution, data })
}

/// The full per-image pipeline with frozen training statistics.
pub fn compute_pi_stack(img: &GrayImage, config: &PipelineConfig, stats: &TrainingStats) -> PIStack {
    render_stack(&image_diagrams(img, config), stats, config).expect("34 diagrams and a positive scale")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Raw,
    #[serde(alias = "pi")]
    Tda,
    #[serde(alias = "vs", alias = "v-s")]
    Stitched,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Raw, Variant::Tda, Variant::Stitched];

    pub fn channels(self) -> usize {
        match self {
            Variant::Raw => 1,
            Variant::Tda => PI_CHANNELS,
            Variant::Stitched => PI_CHANNELS + 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Raw => "raw",
            Variant::Tda => "tda",
            Variant::Stitched => "stitched",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" => Some(Variant::Raw),
            "tda" | "pi" => Some(Variant::Tda),
            "stitched" | "vs" | "v-s" => Some(Variant::Stitched),
            _ => None,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A `C x H x W` network input.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub variant: Variant,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl ModelInput {
    pub fn channels(&self) -> usize {
        self.data.len() / (self.height * self.width)
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

fn push_normalized(out: &mut Vec<f32>, channel: &[f32]) {
    let max = channel.iter().copied().fold(0.0f32, f32::max);
    if max > 0.0 {
        out.extend(channel.iter().map(|&v| v / max));
    } else {
        out.extend(std::iter::repeat_n(0.0, channel.len()));
    }
}

fn check_resolution(img: &GrayImage, stack: &PIStack) -> Result<(), VectorizeError> {
    if stack.resolution != img.height() || stack.resolution != img.width() {
        return Err(VectorizeError::ResolutionMismatch { expected: img.height(), found: stack.resolution });
    }
    Ok(())
}

pub fn raw_input(img: &GrayImage) -> ModelInput {
    ModelInput { variant: Variant::Raw, height: img.height(), width: img.width(), data: img.pixels().to_vec() }
}

/// The 34 persistence-image channels, each max-normalized.
pub fn tda_input(stack: &PIStack) -> ModelInput {
    let mut data = Vec::with_capacity(stack.data.len());
    for c in 0..stack.channels() {
        push_normalized(&mut data, stack.channel(c));
    }
    ModelInput { variant: Variant::Tda, height: stack.resolution, width: stack.resolution, data }
}

/// Raw pixels as channel 0 followed by the 34 max-normalized persistence
/// images, aligned pixel for pixel.
pub fn stitch(img: &GrayImage, stack: &PIStack) -> Result<ModelInput, VectorizeError> {
    check_resolution(img, stack)?;
    let mut data = Vec::with_capacity(img.pixels().len() + stack.data.len());
    data.extend_from_slice(img.pixels());
    for c in 0..stack.channels() {
        push_normalized(&mut data, stack.channel(c));
    }
    Ok(ModelInput { variant: Variant::Stitched, height: img.height(), width: img.width(), data })
}

/// The input a model of `variant` consumes.
pub fn model_input(variant: Variant, img: &GrayImage, stack: Option<&PIStack>) -> Result<ModelInput, VectorizeError> {
    match (variant, stack) {
        (Variant::Raw, _) => Ok(raw_input(img)),
        (Variant::Tda, Some(s)) => {
            check_resolution(img, s)?;
            Ok(tda_input(s))
        }
        (Variant::Stitched, Some(s)) => stitch(img, s),
        (_, None) => Err(VectorizeError::ChannelCount { expected: PI_CHANNELS, found: 0 }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn diagram(points: &[(f64, f64)]) -> PersistenceDiagram {
        PersistenceDiagram {
            dim: 0,
            pairs: points.iter().map(|&(birth, death)| PersistencePair { birth, death, dim: 0, essential: false }).collect(),
            max_value: points.iter().map(|p| p.1).fold(0.0, f64::max),
        }
    }

    fn params(resolution: usize, sigma: f64, range: f64) -> PersistenceSurfaceParams {
        PersistenceSurfaceParams { resolution, sigma, range, weight: Weight::Unit }
    }

    #[test]
    fn scaling() {
        let ds = ImageDiagrams { diagrams: vec![diagram(&[(2.0, 6.0), (1.0, 2.0)])] };
        assert_eq!(scale_diagrams(&ds, 1.0).unwrap(), ds);
        let s = scale_diagrams(&ds, 4.0).unwrap();
        assert_eq!((s.diagrams[0].pairs[0].birth, s.diagrams[0].pairs[0].death), (0.5, 1.5));
        assert_eq!(s.diagrams[0].max_value, 1.5);
        assert_eq!(scale_diagrams(&ds, 0.0), Err(VectorizeError::DegenerateScale));
        let order = |d: &PersistenceDiagram| {
            let mut idx: Vec<usize> = (0..d.len()).collect();
            idx.sort_by(|&a, &b| d.pairs[a].persistence().total_cmp(&d.pairs[b].persistence()));
            idx
        };
        assert_eq!(order(&ds.diagrams[0]), order(&s.diagrams[0]));
    }

    #[test]
    fn empty_diagram_renders_zero() {
        let d = PersistenceDiagram::empty(0);
        let p = params(8, 0.1, 1.0);
        assert!(persistence_surface(&d, &p).iter().all(|&v| v == 0.0));
        assert!(persistence_image(&d, &p).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn surface_peak_and_linearity() {
        let p = PersistenceSurfaceParams { weight: Weight::Linear { max_persistence: 2.0 }, ..params(8, 0.2, 2.0) };
        let one = diagram(&[(0.5, 1.5)]);
        let peak = surface_value(&one, &p, 0.5, 1.0);
        let expected = 0.5 / (2.0 * std::f64::consts::PI * 0.04);
        assert!((peak - expected).abs() < 1e-12);
        let two = diagram(&[(0.5, 1.5), (0.5, 1.5)]);
        for (a, b) in persistence_surface(&one, &p).iter().zip(persistence_surface(&two, &p)) {
            assert_eq!(2.0 * a, b);
        }
    }

    #[test]
    fn total_mass() {
        let d = diagram(&[(0.5, 1.0)]);
        let total: f64 = persistence_image(&d, &params(28, 0.05, 1.05)).iter().sum();
        assert!((0.99..=1.0).contains(&total), "{total}");
    }

    #[test]
    fn pixel_integral_matches_quadrature() {
        // Independent route: midpoint rule on the surface density.
        let d = diagram(&[(0.5, 1.0)]);
        let p = params(28, 0.05, 1.05);
        let img = persistence_image(&d, &p);
        let dx = 1.05 / 28.0;
        let sub = 20;
        let h = dx / sub as f64;
        let mut worst: f64 = 0.0;
        for i in 0..28 {
            for j in 0..28 {
                if img[i * 28 + j] < 1e-4 {
                    continue;
                }
                let mut q = 0.0;
                for a in 0..sub {
                    for b in 0..sub {
                        let x = j as f64 * dx + (b as f64 + 0.5) * h;
                        let y = i as f64 * dx + (a as f64 + 0.5) * h;
                        q += surface_value(&d, &p, x, y) * h * h;
                    }
                }
                worst = worst.max((q - img[i * 28 + j]).abs() / img[i * 28 + j]);
            }
        }
        assert!(worst < 0.02, "{worst}");
    }

    #[test]
    fn stitch_channels() {
        let img = GrayImage::new(28, 28, (0..784).map(|i| (i % 7) as f32 / 7.0).collect()).unwrap();
        let mut data = vec![0.0f32; PI_CHANNELS * 784];
        data[784 + 5] = 4.0;
        data[784 + 6] = 2.0;
        let stack = PIStack { resolution: 28, data };
        let input = stitch(&img, &stack).unwrap();
        assert_eq!(input.channels(), 35);
        assert_eq!(input.channel(0), img.pixels());
        assert_eq!((input.channel(2)[5], input.channel(2)[6]), (1.0, 0.5));
        assert!(input.channel(1).iter().all(|&v| v == 0.0));
        let small = PIStack { resolution: 20, data: vec![0.0; PI_CHANNELS * 400] };
        assert_eq!(stitch(&img, &small), Err(VectorizeError::ResolutionMismatch { expected: 28, found: 20 }));
    }

    #[test]
    fn black_image_stack_is_zero() {
        let img = GrayImage::black();
        let stack = compute_pi_stack(&img, &PipelineConfig::default(), &TrainingStats::identity());
        assert_eq!(stack.channels(), 34);
        assert!(stack.data().iter().all(|&v| v == 0.0));
        let input = stitch(&img, &stack).unwrap();
        assert!(input.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn provenance_order() {
        assert_eq!(PIStack::provenance(0), (0, 0));
        assert_eq!(PIStack::provenance(1), (0, 1));
        assert_eq!(PIStack::provenance(33), (16, 1));
    }

    #[test]
    fn diagram_rows_round_trip() {
        let mut diagrams: Vec<PersistenceDiagram> = (0..PI_CHANNELS).map(|c| PersistenceDiagram::empty(c % 2)).collect();
        diagrams[3].pairs.push(PersistencePair { birth: 1.0, death: 4.0, dim: 1, essential: false });
        diagrams[3].max_value = 4.0;
        diagrams[4].pairs.push(PersistencePair { birth: 0.0, death: 7.0, dim: 0, essential: true });
        diagrams[4].max_value = 7.0;
        let ds = ImageDiagrams { diagrams };
        assert_eq!(ImageDiagrams::from_rows(&ds.to_rows()), ds);
    }

    fn arb_points() -> impl Strategy<Value = Vec<(f64, f64)>> {
        proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..12)
            .prop_map(|v| v.into_iter().map(|(b, p)| (b, b + p)).collect())
    }

    proptest! {
        #[test]
        fn union_is_additive(a in arb_points(), b in arb_points()) {
            let p = PersistenceSurfaceParams { weight: Weight::Linear { max_persistence: 1.0 }, ..params(16, 0.1, 2.0) };
            let both: Vec<(f64, f64)> = a.iter().chain(&b).copied().collect();
            let (ia, ib, iu) = (persistence_image(&diagram(&a), &p), persistence_image(&diagram(&b), &p), persistence_image(&diagram(&both), &p));
            for k in 0..iu.len() {
                prop_assert!((ia[k] + ib[k] - iu[k]).abs() <= 1e-10);
                prop_assert!(iu[k] >= 0.0);
            }
        }

        #[test]
        fn permutation_invariant(pts in arb_points(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let p = PersistenceSurfaceParams { weight: Weight::Linear { max_persistence: 1.0 }, ..params(12, 0.1, 2.0) };
            let mut shuffled = pts.clone();
            shuffled.shuffle(&mut crate::rng::stream(seed, "perm", &[]));
            prop_assert_eq!(persistence_image(&diagram(&pts), &p), persistence_image(&diagram(&shuffled), &p));
        }

        #[test]
        fn scale_equivariance(pts in arb_points(), s in 0.25f64..8.0) {
            let base = PersistenceSurfaceParams { weight: Weight::Linear { max_persistence: 1.0 }, ..params(10, 0.15, 2.0) };
            let scaled = PersistenceSurfaceParams {
                sigma: base.sigma * s,
                range: base.range * s,
                weight: Weight::Linear { max_persistence: s },
                ..base
            };
            let d = diagram(&pts);
            let ds = diagram(&pts.iter().map(|&(b, e)| (b * s, e * s)).collect::<Vec<_>>());
            let (i1, i2) = (persistence_image(&d, &base), persistence_image(&ds, &scaled));
            let (s1, s2) = (persistence_surface(&d, &base), persistence_surface(&ds, &scaled));
            for k in 0..i1.len() {
                prop_assert!((i1[k] - i2[k]).abs() <= 1e-10 * i1[k].abs() + 1e-15);
                prop_assert!((s1[k] - s2[k] * s * s).abs() <= 1e-10 * s1[k].abs() + 1e-300);
            }
        }
    }
}
