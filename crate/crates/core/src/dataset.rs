//! MNIST IDX loading, noise injection and reproducible train/test splits.

use std::fs;
use std::io::{Cursor, Read};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ReadBytesExt};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

/// Side length of the digit images this crate works with.
pub const SIDE: usize = 28;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: file truncated, header promises {expected} bytes of payload, found {found}")]
    TruncatedFile { path: PathBuf, expected: usize, found: usize },
    #[error("{path}: images are {rows}x{cols}, expected 28x28")]
    DimensionMismatch { path: PathBuf, rows: usize, cols: usize },
    #[error("{path}: label {label} at position {position} is outside 0..=9")]
    LabelOutOfRange { path: PathBuf, position: usize, label: u8 },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("pool of {pool} images cannot supply {train} training and {test} test images")]
    PoolTooSmall { pool: usize, train: usize, test: usize },
    #[error("pixel value {0} outside [0, 1]")]
    PixelOutOfRange(f32),
    #[error("{expected} pixels expected, got {found}")]
    PixelCount { expected: usize, found: usize },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// A grayscale image with intensities in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
    pub label: Option<u8>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self, DatasetError> {
        if pixels.len() != height * width {
            return Err(DatasetError::PixelCount { expected: height * width, found: pixels.len() });
        }
        if let Some(&bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(DatasetError::PixelOutOfRange(bad));
        }
        Ok(Self { height, width, pixels, label: None })
    }

    /// An all-zero 28x28 image.
    pub fn black() -> Self {
        Self { height: SIDE, width: SIDE, pixels: vec![0.0; SIDE * SIDE], label: None }
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.label = Some(label);
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    /// Pixel at `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    fn map_pixels(&self, pixels: Vec<f32>) -> Self {
        Self { height: self.height, width: self.width, pixels, label: self.label }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, DatasetError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    Ok(bytes)
}

fn header(path: &Path, cur: &mut Cursor<&[u8]>, words: usize) -> Result<Vec<u32>, DatasetError> {
    let total = cur.get_ref().len();
    (0..words)
        .map(|_| {
            cur.read_u32::<BigEndian>().map_err(|_| DatasetError::TruncatedFile {
                path: path.to_path_buf(),
                expected: words * 4,
                found: total,
            })
        })
        .collect()
}

/// Parse an IDX3 image file. Labels are left unset.
pub fn parse_idx_images(path: &Path, bytes: &[u8]) -> Result<Vec<GrayImage>, DatasetError> {
    let mut cur = Cursor::new(bytes);
    let magic = header(path, &mut cur, 1)?[0];
    if magic != IMAGES_MAGIC {
        return Err(DatasetError::BadMagic { path: path.to_path_buf(), found: magic, expected: IMAGES_MAGIC });
    }
    let dims = header(path, &mut cur, 3)?;
    let (count, rows, cols) = (dims[0] as usize, dims[1] as usize, dims[2] as usize);
    if rows != SIDE || cols != SIDE {
        return Err(DatasetError::DimensionMismatch { path: path.to_path_buf(), rows, cols });
    }
    let payload = &bytes[16..];
    let expected = count * SIDE * SIDE;
    if payload.len() < expected {
        return Err(DatasetError::TruncatedFile { path: path.to_path_buf(), expected, found: payload.len() });
    }
    Ok(payload[..expected]
        .chunks_exact(SIDE * SIDE)
        .map(|chunk| GrayImage {
            height: SIDE,
            width: SIDE,
            pixels: chunk.iter().map(|&b| f32::from(b) / 255.0).collect(),
            label: None,
        })
        .collect())
}

/// Parse an IDX1 label file.
pub fn parse_idx_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>, DatasetError> {
    let mut cur = Cursor::new(bytes);
    let magic = header(path, &mut cur, 1)?[0];
    if magic != LABELS_MAGIC {
        return Err(DatasetError::BadMagic { path: path.to_path_buf(), found: magic, expected: LABELS_MAGIC });
    }
    let count = header(path, &mut cur, 1)?[0] as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(DatasetError::TruncatedFile { path: path.to_path_buf(), expected: count, found: payload.len() });
    }
    let labels = &payload[..count];
    if let Some(position) = labels.iter().position(|&l| l > 9) {
        return Err(DatasetError::LabelOutOfRange { path: path.to_path_buf(), position, label: labels[position] });
    }
    Ok(labels.to_vec())
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Vec<GrayImage>, DatasetError> {
    let path = path.as_ref();
    parse_idx_images(path, &read_file(path)?)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>, DatasetError> {
    let path = path.as_ref();
    parse_idx_labels(path, &read_file(path)?)
}

/// Load an image file and a label file and attach the labels.
pub fn load_labeled(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Vec<GrayImage>, DatasetError> {
    let images = load_idx_images(images)?;
    let labels = load_idx_labels(labels)?;
    if images.len() != labels.len() {
        return Err(DatasetError::CountMismatch { images: images.len(), labels: labels.len() });
    }
    Ok(images.into_iter().zip(labels).map(|(img, l)| img.with_label(l)).collect())
}

/// The labeled training files of a standard MNIST directory.
pub fn load_train(dir: impl AsRef<Path>) -> Result<Vec<GrayImage>, DatasetError> {
    let dir = dir.as_ref();
    load_labeled(dir.join(TRAIN_IMAGES), dir.join(TRAIN_LABELS))
}

/// The labeled test (t10k) files of a standard MNIST directory.
pub fn load_test(dir: impl AsRef<Path>) -> Result<Vec<GrayImage>, DatasetError> {
    let dir = dir.as_ref();
    load_labeled(dir.join(TEST_IMAGES), dir.join(TEST_LABELS))
}

/// Serialize images into IDX3 bytes; pixels are quantized to `round(255 * p)`.
pub fn encode_idx_images(images: &[GrayImage]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * SIDE * SIDE);
    for word in [IMAGES_MAGIC, images.len() as u32, SIDE as u32, SIDE as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    for img in images {
        out.extend(img.pixels.iter().map(|&p| (p * 255.0).round() as u8));
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    SaltPepper,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::SaltPepper => "salt_pepper",
        }
    }

    fn key(self) -> u64 {
        match self {
            NoiseKind::Gaussian => 1,
            NoiseKind::SaltPepper => 2,
        }
    }
}

/// One concrete noise application.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub gaussian_sigma: f64,
    pub sp_fraction: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn apply(&self, img: &GrayImage) -> GrayImage {
        match self.kind {
            NoiseKind::Gaussian => add_gaussian_noise(img, self.gaussian_sigma, self.seed),
            NoiseKind::SaltPepper => add_salt_pepper_noise(img, self.sp_fraction, self.seed),
        }
    }
}

/// Noise magnitudes plus the root seed from which per-image seeds derive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub gaussian_sigma: f64,
    pub sp_fraction: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { gaussian_sigma: 0.3, sp_fraction: 0.1, seed: 0x5EED_0015E }
    }
}

impl NoiseConfig {
    /// The noise applied to pool image `image_id` with `kind`. The seed depends
    /// only on the image and the kind, so a given noisy image is the same
    /// wherever it is drawn.
    pub fn spec(&self, kind: NoiseKind, image_id: usize) -> NoiseSpec {
        NoiseSpec {
            kind,
            gaussian_sigma: self.gaussian_sigma,
            sp_fraction: self.sp_fraction,
            seed: rng::derive_seed(self.seed, "noise", &[kind.key(), image_id as u64]),
        }
    }
}

/// Additive zero-mean Gaussian noise, clamped back into `[0, 1]`.
pub fn add_gaussian_noise(img: &GrayImage, sigma: f64, seed: u64) -> GrayImage {
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    let mut rng = rng::stream(seed, "gaussian", &[]);
    let pixels = img
        .pixels
        .iter()
        .map(|&p| (f64::from(p) + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32)
        .collect();
    img.map_pixels(pixels)
}

/// Positions hit by salt-and-pepper noise: `floor(len * fraction)` distinct
/// indices, in selection order.
pub fn salt_pepper_positions(len: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let count = ((len as f64) * fraction.clamp(0.0, 1.0)).floor() as usize;
    let mut rng = rng::stream(seed, "salt_pepper", &[]);
    index::sample(&mut rng, len, count).into_vec()
}

/// Force a fixed fraction of pixels to 0 or 1 with equal probability.
pub fn add_salt_pepper_noise(img: &GrayImage, fraction: f64, seed: u64) -> GrayImage {
    let mut pixels = img.pixels.clone();
    let mut coin = rng::stream(seed, "salt_pepper_value", &[]);
    for pos in salt_pepper_positions(pixels.len(), fraction, seed) {
        pixels[pos] = if coin.gen_bool(0.5) { 1.0 } else { 0.0 };
    }
    img.map_pixels(pixels)
}

/// How one experiment iteration samples its training and test sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_size: usize,
    pub test_size: usize,
    /// Fraction of training images that receive noise.
    pub mix_ratio: f64,
    pub iteration: u32,
    pub seed: u64,
}

/// A drawn image together with where it came from.
#[derive(Debug, Clone)]
pub struct Sample {
    /// Index into the pool.
    pub id: usize,
    pub noise: Option<NoiseKind>,
    pub image: GrayImage,
}

impl Sample {
    pub fn label(&self) -> u8 {
        self.image.label.unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

fn alternating_kind(position: usize) -> NoiseKind {
    if position % 2 == 0 {
        NoiseKind::Gaussian
    } else {
        NoiseKind::SaltPepper
    }
}

/// Number of noisy training images for a split.
pub fn noisy_count(train_size: usize, mix_ratio: f64) -> usize {
    ((train_size as f64) * mix_ratio).round() as usize
}

/// Draw disjoint train/test sets from `pool`.
///
/// A permutation of the pool is drawn from `(seed, iteration)`; the first
/// `test_size` entries form the test set and the next `train_size` the
/// training set, so smaller training sets of one iteration are prefixes of
/// larger ones. Every test image is noisy (Gaussian at even positions,
/// salt-and-pepper at odd ones). The first `round(mix_ratio * train_size)`
/// training images are noisy with the same alternation; the rest are clean.
pub fn draw_split(pool: &[GrayImage], spec: &SplitSpec, noise: &NoiseConfig) -> Result<Split, DatasetError> {
    let needed = spec.train_size + spec.test_size;
    if pool.len() < needed {
        return Err(DatasetError::PoolTooSmall { pool: pool.len(), train: spec.train_size, test: spec.test_size });
    }
    let mut rng = rng::stream(spec.seed, "split", &[u64::from(spec.iteration)]);
    let order = index::sample(&mut rng, pool.len(), needed).into_vec();
    let noisy = |id: usize, kind: NoiseKind| Sample {
        id,
        noise: Some(kind),
        image: noise.spec(kind, id).apply(&pool[id]),
    };
    let test = order[..spec.test_size]
        .iter()
        .enumerate()
        .map(|(pos, &id)| noisy(id, alternating_kind(pos)))
        .collect();
    let n_noisy = noisy_count(spec.train_size, spec.mix_ratio);
    let train = order[spec.test_size..]
        .iter()
        .enumerate()
        .map(|(pos, &id)| {
            if pos < n_noisy {
                noisy(id, alternating_kind(pos))
            } else {
                Sample { id, noise: None, image: pool[id].clone() }
            }
        })
        .collect();
    Ok(Split { train, test })
}
