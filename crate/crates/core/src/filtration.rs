//! Binarization and the height/radial filtrations applied to each digit.
//!
//! Pixel positions are `(row, col)` with the origin at the top-left corner.
//! Height directions are given as `(x, y)` vectors where `x` runs along
//! columns and `y` along rows, so `(1, 0)` sweeps left to right and
//! `(0, 1)` top to bottom.

use serde::{Deserialize, Serialize};

use crate::dataset::GrayImage;

/// Binarization threshold used by the pipeline.
pub const DEFAULT_THRESHOLD: f64 = 0.4;

/// Number of filtrations in the standard set (8 height + 9 radial).
pub const FILTRATION_COUNT: usize = 17;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    height: usize,
    width: usize,
    pixels: Vec<bool>,
}

impl BinaryImage {
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let pixels = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self { height, width, pixels }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.pixels[row * self.width + col]
    }

    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.width, self.height, |r, c| self.get(c, r))
    }

    fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pixels
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(move |(i, _)| (i / self.width, i % self.width))
    }
}

/// Real filtration values on a pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredImage {
    height: usize,
    width: usize,
    values: Vec<f64>,
    max_value: f64,
}

impl FilteredImage {
    /// Wrap raw values; `max_value` is the largest entry (0 for an empty grid).
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), height * width, "value count must match the grid");
        assert!(values.iter().all(|v| v.is_finite()), "filtration values must be finite");
        let max_value = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let max_value = if max_value.is_finite() { max_value } else { 0.0 };
        Self { height, width, values, max_value }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn max_value(&self) -> f64 {
        self.max_value
    }

    /// Shift every value by `c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self::new(self.height, self.width, self.values.iter().map(|v| v + c).collect())
    }

    /// Binary PGM (P5) dump, values rescaled to 0..=255 by `max_value`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        let scale = if self.max_value > 0.0 { 255.0 / self.max_value } else { 0.0 };
        out.extend(self.values.iter().map(|v| (v * scale).round().clamp(0.0, 255.0) as u8));
        out
    }

    /// Foreground values in `fg`, `max` of them everywhere else.
    fn from_foreground(b: &BinaryImage, value: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; b.height * b.width];
        let mut max_value = f64::NEG_INFINITY;
        for (r, c) in b.foreground() {
            let v = value(r, c);
            values[r * b.width + c] = v;
            max_value = max_value.max(v);
        }
        if !max_value.is_finite() {
            return Self { height: b.height, width: b.width, values, max_value: 0.0 };
        }
        for (v, &on) in values.iter_mut().zip(&b.pixels) {
            if !on {
                *v = max_value;
            }
        }
        Self { height: b.height, width: b.width, values, max_value }
    }
}

/// Foreground where the pixel strictly exceeds `threshold`.
pub fn binarize(img: &GrayImage, threshold: f64) -> BinaryImage {
    // Compare in the pixel type so a stored 0.4 is not promoted above 0.4.
    let t = threshold as f32;
    BinaryImage {
        height: img.height(),
        width: img.width(),
        pixels: img.pixels().iter().map(|&p| p > t).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FiltrationKind {
    /// Unit direction `(x, y)`.
    Height { direction: [f64; 2] },
    /// Center `(row, col)`.
    Radial { center: [usize; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiltrationSpec {
    pub index: usize,
    pub kind: FiltrationKind,
}

impl FiltrationSpec {
    pub fn apply(&self, b: &BinaryImage) -> FilteredImage {
        match self.kind {
            FiltrationKind::Height { direction } => height_filtration(b, direction),
            FiltrationKind::Radial { center } => radial_filtration(b, center),
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            FiltrationKind::Height { direction: [x, y] } => format!("height({x:.3},{y:.3})"),
            FiltrationKind::Radial { center: [r, c] } => format!("radial({r},{c})"),
        }
    }
}

/// Inner product with `direction`, shifted so the lowest foreground pixel is 0.
pub fn height_filtration(b: &BinaryImage, direction: [f64; 2]) -> FilteredImage {
    let project = |r: usize, c: usize| direction[0] * c as f64 + direction[1] * r as f64;
    let min = b.foreground().map(|(r, c)| project(r, c)).fold(f64::INFINITY, f64::min);
    FilteredImage::from_foreground(b, |r, c| project(r, c) - min)
}

/// Euclidean distance from `center` (row, col).
pub fn radial_filtration(b: &BinaryImage, center: [usize; 2]) -> FilteredImage {
    let (cr, cc) = (center[0] as f64, center[1] as f64);
    FilteredImage::from_foreground(b, |r, c| (r as f64 - cr).hypot(c as f64 - cc))
}

/// The 8 height directions followed by the 9 radial centers, indices 0..17.
pub fn standard_filtrations() -> Vec<FiltrationSpec> {
    let d = std::f64::consts::FRAC_1_SQRT_2;
    let directions = [
        [0.0, 1.0],
        [0.0, -1.0],
        [1.0, 0.0],
        [-1.0, 0.0],
        [d, d],
        [d, -d],
        [-d, d],
        [-d, -d],
    ];
    let heights = directions.into_iter().map(|direction| FiltrationKind::Height { direction });
    let centers = [6, 13, 20];
    let radials = centers
        .iter()
        .flat_map(|&r| centers.iter().map(move |&c| FiltrationKind::Radial { center: [r, c] }));
    heights
        .chain(radials)
        .enumerate()
        .map(|(index, kind)| FiltrationSpec { index, kind })
        .collect()
}
