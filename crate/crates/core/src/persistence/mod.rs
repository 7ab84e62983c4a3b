//! Persistent homology of filtered cell complexes over Z/2.
//!
//! Images go through [`build_cubical_complex`], [`boundary_matrix`] and
//! [`reduce`]; [`diagrams`] composes the three and returns the H0 and H1
//! diagrams. Essential classes are closed off at the complex's maximum
//! filtration value and zero-persistence pairs are dropped. A small
//! Vietoris-Rips builder and a dense Betti-number oracle exist to check the
//! engine independently.

mod cubical;
mod oracle;
mod reduction;
mod rips;

use std::fmt::Write as _;

use thiserror::Error;

pub use cubical::{build_cubical_complex, Cube, CubicalComplex};
pub use oracle::{betti_oracle, check_against_oracle, OracleMismatch, ORACLE_MAX_CELLS};
pub use reduction::{boundary_matrix, reduce, BoundaryMatrix, Reduction};
pub use rips::{rips_filtration, Simplex, SimplicialFiltration, MAX_POINTS};

use crate::filtration::FilteredImage;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PersistenceError {
    #[error("face {face} does not precede its coface {coface}")]
    OrderViolation { face: usize, coface: usize },
    #[error("{points} points exceed the oracle limit of {max}")]
    TooManyPoints { points: usize, max: usize },
    #[error("sublevel complex has {cells} cells, oracle limit is {max}")]
    TooLarge { cells: usize, max: usize },
}

/// A filtered cell complex whose cells are indexed in filtration order.
pub trait FilteredComplex {
    fn len(&self) -> usize;
    fn dim(&self, cell: usize) -> usize;
    fn value(&self, cell: usize) -> f64;
    /// Sorted indices of the codimension-1 faces.
    fn faces(&self, cell: usize) -> Vec<usize>;
    /// Death value assigned to essential classes.
    fn max_value(&self) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersistencePair {
    pub birth: f64,
    pub death: f64,
    pub dim: usize,
    pub essential: bool,
}

impl PersistencePair {
    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }

    /// Alive in the sublevel complex at `t`.
    pub fn alive_at(&self, t: f64) -> bool {
        self.birth <= t && (self.essential || t < self.death)
    }
}

/// Pairs of one homology dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceDiagram {
    pub dim: usize,
    pub pairs: Vec<PersistencePair>,
    pub max_value: f64,
}

impl PersistenceDiagram {
    pub fn empty(dim: usize) -> Self {
        Self { dim, pairs: Vec::new(), max_value: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Divide every coordinate and the max value by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            pairs: self
                .pairs
                .iter()
                .map(|p| PersistencePair { birth: p.birth / s, death: p.death / s, ..*p })
                .collect(),
            max_value: self.max_value / s,
        }
    }

    /// `dim birth death essential_flag` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            let _ = writeln!(out, "{} {} {} {}", p.dim, p.birth, p.death, u8::from(p.essential));
        }
        out
    }
}

/// Every pair of the complex, zero-persistence ones included; essential
/// classes die at `k.max_value()`.
pub fn persistence_pairs<K: FilteredComplex + ?Sized>(k: &K) -> Result<Vec<PersistencePair>, PersistenceError> {
    let reduction = reduce(&boundary_matrix(k)?);
    let mut pairs: Vec<PersistencePair> = reduction
        .pairs
        .iter()
        .map(|&(b, d)| PersistencePair { birth: k.value(b), death: k.value(d), dim: k.dim(b), essential: false })
        .collect();
    pairs.extend(reduction.essential.iter().map(|&c| PersistencePair {
        birth: k.value(c),
        death: k.max_value(),
        dim: k.dim(c),
        essential: true,
    }));
    Ok(pairs)
}

/// H0 and H1 diagrams of a complex, without zero-persistence pairs.
pub fn complex_diagrams<K: FilteredComplex + ?Sized>(
    k: &K,
) -> Result<(PersistenceDiagram, PersistenceDiagram), PersistenceError> {
    let pairs = persistence_pairs(k)?;
    let split = |dim: usize| PersistenceDiagram {
        dim,
        pairs: pairs.iter().filter(|p| p.dim == dim && p.death > p.birth).copied().collect(),
        max_value: k.max_value(),
    };
    Ok((split(0), split(1)))
}

/// H0 and H1 diagrams of the sublevel filtration of an image.
pub fn diagrams(f: &FilteredImage) -> (PersistenceDiagram, PersistenceDiagram) {
    complex_diagrams(&build_cubical_complex(f)).expect("cubical complexes are built in filtration order")
}
