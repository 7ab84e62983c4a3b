//! Vietoris-Rips filtrations of small planar point clouds, up to triangles.
//! Used to exercise the reduction engine on simplicial input.

use std::collections::HashMap;

use super::{FilteredComplex, PersistenceError};

/// Point clouds above this size are rejected.
pub const MAX_POINTS: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Simplex {
    /// Sorted vertex indices.
    pub vertices: Vec<usize>,
    pub value: f64,
}

impl Simplex {
    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }
}

/// Face-closed simplices sorted by `(value, dim, vertices)`.
#[derive(Debug, Clone)]
pub struct SimplicialFiltration {
    simplices: Vec<Simplex>,
    index: HashMap<Vec<usize>, usize>,
}

impl SimplicialFiltration {
    /// Sort and index an arbitrary face-closed family.
    pub fn new(mut simplices: Vec<Simplex>) -> Self {
        simplices.sort_by(|a, b| {
            a.value
                .total_cmp(&b.value)
                .then(a.dim().cmp(&b.dim()))
                .then_with(|| a.vertices.cmp(&b.vertices))
        });
        let index = simplices.iter().enumerate().map(|(i, s)| (s.vertices.clone(), i)).collect();
        Self { simplices, index }
    }

    pub fn simplices(&self) -> &[Simplex] {
        &self.simplices
    }
}

impl FilteredComplex for SimplicialFiltration {
    fn len(&self) -> usize {
        self.simplices.len()
    }

    fn dim(&self, cell: usize) -> usize {
        self.simplices[cell].dim()
    }

    fn value(&self, cell: usize) -> f64 {
        self.simplices[cell].value
    }

    fn faces(&self, cell: usize) -> Vec<usize> {
        let v = &self.simplices[cell].vertices;
        if v.len() < 2 {
            return Vec::new();
        }
        let mut out: Vec<usize> = (0..v.len())
            .map(|skip| {
                let face: Vec<usize> = v.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &x)| x).collect();
                self.index[&face]
            })
            .collect();
        out.sort_unstable();
        out
    }

    fn max_value(&self) -> f64 {
        self.simplices.iter().map(|s| s.value).fold(0.0, f64::max)
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Vertices at 0, edges at their length, triangles at their longest edge;
/// simplices above `max_scale` are left out.
pub fn rips_filtration(points: &[[f64; 2]], max_scale: f64) -> Result<SimplicialFiltration, PersistenceError> {
    let n = points.len();
    if n > MAX_POINTS {
        return Err(PersistenceError::TooManyPoints { points: n, max: MAX_POINTS });
    }
    let mut simplices: Vec<Simplex> = (0..n).map(|i| Simplex { vertices: vec![i], value: 0.0 }).collect();
    let d = |i: usize, j: usize| distance(points[i], points[j]);
    for i in 0..n {
        for j in i + 1..n {
            if d(i, j) <= max_scale {
                simplices.push(Simplex { vertices: vec![i, j], value: d(i, j) });
            }
            for k in j + 1..n {
                let value = d(i, j).max(d(i, k)).max(d(j, k));
                if value <= max_scale {
                    simplices.push(Simplex { vertices: vec![i, j, k], value });
                }
            }
        }
    }
    Ok(SimplicialFiltration::new(simplices))
}
