//! Filtered cubical complexes built from pixel grids.
//!
//! Each pixel is a 2-cube carrying its filtration value; edges and vertices
//! take the minimum over the pixels that contain them. Cells live on the
//! doubled grid `(2H+1) x (2W+1)`: pixel `(r, c)` sits at `(2r+1, 2c+1)`,
//! and a coordinate is odd exactly when the cube's interval along that axis
//! is non-degenerate.

use std::cmp::Ordering;

use super::FilteredComplex;
use crate::filtration::FilteredImage;

/// An elementary cube in the plane: a product of two intervals
/// `[a, a+1]` or `[a, a]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cube {
    /// Lower endpoints `(row, col)` of the two intervals.
    pub anchor: [usize; 2],
    /// Bit `k` set when interval `k` (0 = rows, 1 = columns) is degenerate.
    pub degenerate: u8,
}

impl Cube {
    pub fn dim(&self) -> usize {
        2 - self.degenerate.count_ones() as usize
    }

    fn from_grid(i: usize, j: usize) -> Self {
        let degenerate = u8::from(i % 2 == 0) | (u8::from(j % 2 == 0) << 1);
        Self { anchor: [i / 2, j / 2], degenerate }
    }

    fn grid(&self) -> (usize, usize) {
        let i = 2 * self.anchor[0] + usize::from(self.degenerate & 1 == 0);
        let j = 2 * self.anchor[1] + usize::from(self.degenerate & 2 == 0);
        (i, j)
    }
}

#[derive(Debug, Clone)]
pub struct CubicalComplex {
    cells: Vec<Cube>,
    values: Vec<f64>,
    max_value: f64,
    grid_cols: usize,
    /// Sorted position of the cell at each doubled-grid coordinate.
    order: Vec<usize>,
}

/// The top-cell cubical complex of `f`, cells sorted by
/// `(value, dim, anchor, degenerate mask)`.
pub fn build_cubical_complex(f: &FilteredImage) -> CubicalComplex {
    let (h, w) = (f.height(), f.width());
    let (gr, gc) = (2 * h + 1, 2 * w + 1);
    let pixel_span = |g: usize, n: usize| -> std::ops::Range<usize> {
        if g % 2 == 1 {
            g / 2..g / 2 + 1
        } else {
            (g / 2).saturating_sub(1)..(g / 2).min(n.saturating_sub(1)) + 1
        }
    };
    let mut grid_values = vec![f64::INFINITY; gr * gc];
    for i in 0..gr {
        let rows = pixel_span(i, h);
        for j in 0..gc {
            let cols = pixel_span(j, w);
            let mut v = f64::INFINITY;
            for r in rows.clone() {
                for c in cols.clone() {
                    v = v.min(f.get(r, c));
                }
            }
            grid_values[i * gc + j] = v;
        }
    }
    let mut cells: Vec<(Cube, f64)> = (0..gr * gc)
        .filter(|_| h > 0 && w > 0)
        .map(|g| (Cube::from_grid(g / gc, g % gc), grid_values[g]))
        .collect();
    cells.sort_by(compare_cells);
    let mut order = vec![usize::MAX; gr * gc];
    for (idx, (cube, _)) in cells.iter().enumerate() {
        let (i, j) = cube.grid();
        order[i * gc + j] = idx;
    }
    let (cells, values) = cells.into_iter().unzip();
    CubicalComplex { cells, values, max_value: f.max_value(), grid_cols: gc, order }
}

fn compare_cells(a: &(Cube, f64), b: &(Cube, f64)) -> Ordering {
    a.1.total_cmp(&b.1)
        .then(a.0.dim().cmp(&b.0.dim()))
        .then(a.0.anchor.cmp(&b.0.anchor))
        .then(a.0.degenerate.cmp(&b.0.degenerate))
}

impl CubicalComplex {
    pub fn cells(&self) -> &[Cube] {
        &self.cells
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sorted index of a cube, if it belongs to the complex.
    pub fn index_of(&self, cube: &Cube) -> Option<usize> {
        let (i, j) = cube.grid();
        (j < self.grid_cols)
            .then(|| self.order.get(i * self.grid_cols + j).copied())
            .flatten()
    }
}

impl FilteredComplex for CubicalComplex {
    fn len(&self) -> usize {
        self.cells.len()
    }

    fn dim(&self, cell: usize) -> usize {
        self.cells[cell].dim()
    }

    fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    fn faces(&self, cell: usize) -> Vec<usize> {
        let (i, j) = self.cells[cell].grid();
        let at = |i: usize, j: usize| self.order[i * self.grid_cols + j];
        let mut out = Vec::with_capacity(4);
        if i % 2 == 1 {
            out.push(at(i - 1, j));
            out.push(at(i + 1, j));
        }
        if j % 2 == 1 {
            out.push(at(i, j - 1));
            out.push(at(i, j + 1));
        }
        out.sort_unstable();
        out
    }

    fn max_value(&self) -> f64 {
        self.max_value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel() {
        let k = build_cubical_complex(&FilteredImage::new(1, 1, vec![5.0]));
        assert_eq!(k.len(), 9);
        let dims: Vec<usize> = (0..9).map(|c| k.dim(c)).collect();
        assert_eq!(dims.iter().filter(|&&d| d == 0).count(), 4);
        assert_eq!(dims.iter().filter(|&&d| d == 1).count(), 4);
        assert_eq!(dims.iter().filter(|&&d| d == 2).count(), 1);
        assert!(k.values().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn shared_edge_takes_minimum() {
        let k = build_cubical_complex(&FilteredImage::new(1, 2, vec![1.0, 3.0]));
        let edge = Cube { anchor: [0, 1], degenerate: 0b10 };
        assert_eq!(edge.dim(), 1);
        assert_eq!(k.value(k.index_of(&edge).unwrap()), 1.0);
        for r in 0..2 {
            let v = Cube { anchor: [r, 1], degenerate: 0b11 };
            assert_eq!(k.value(k.index_of(&v).unwrap()), 1.0);
        }
        let far = Cube { anchor: [0, 2], degenerate: 0b10 };
        assert_eq!(k.value(k.index_of(&far).unwrap()), 3.0);
    }

    #[test]
    fn cell_count_matches_enumeration() {
        let f = FilteredImage::new(28, 28, vec![0.0; 784]);
        let k = build_cubical_complex(&f);
        assert_eq!(k.len(), 784 + 2 * 28 * 29 + 29 * 29);
        assert_eq!(k.len(), 3249);
        let mut counts = [0usize; 3];
        for c in 0..k.len() {
            counts[k.dim(c)] += 1;
        }
        assert_eq!(counts, [841, 1624, 784]);
    }

    #[test]
    fn face_closed_and_monotone() {
        let values: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64).collect();
        let k = build_cubical_complex(&FilteredImage::new(3, 4, values));
        for c in 0..k.len() {
            let faces = k.faces(c);
            assert_eq!(faces.len(), 2 * k.dim(c));
            for f in faces {
                assert!(f < c);
                assert_eq!(k.dim(f) + 1, k.dim(c));
                assert!(k.value(f) <= k.value(c));
            }
        }
    }
}
