//! Sparse Z/2 boundary matrices and the standard column reduction.

use super::{FilteredComplex, PersistenceError};

/// Column-sparse boundary matrix over Z/2. Column `j` holds the sorted row
/// indices of the codimension-1 faces of cell `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryMatrix {
    pub columns: Vec<Vec<usize>>,
}

impl BoundaryMatrix {
    pub fn zero(n: usize) -> Self {
        Self { columns: vec![Vec::new(); n] }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

pub fn boundary_matrix<K: FilteredComplex + ?Sized>(k: &K) -> Result<BoundaryMatrix, PersistenceError> {
    let columns = (0..k.len())
        .map(|j| {
            let faces = k.faces(j);
            match faces.last() {
                Some(&low) if low >= j => Err(PersistenceError::OrderViolation { face: low, coface: j }),
                _ => Ok(faces),
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(BoundaryMatrix { columns })
}

/// Result of reducing a boundary matrix.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub reduced: BoundaryMatrix,
    /// `(birth cell, death cell)` with `birth = low(death)`.
    pub pairs: Vec<(usize, usize)>,
    /// Cells that neither kill nor are killed.
    pub essential: Vec<usize>,
}

impl Reduction {
    pub fn low(&self, column: usize) -> Option<usize> {
        self.reduced.columns[column].last().copied()
    }
}

/// Symmetric difference of two sorted index lists, written into `out`.
fn add_columns(target: &[usize], source: &[usize], out: &mut Vec<usize>) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < target.len() && j < source.len() {
        match target[i].cmp(&source[j]) {
            std::cmp::Ordering::Less => {
                out.push(target[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(source[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&target[i..]);
    out.extend_from_slice(&source[j..]);
}

/// Left-to-right column reduction: while another column shares this
/// column's lowest one, add it. Afterwards every non-zero column has a
/// distinct low.
pub fn reduce(matrix: &BoundaryMatrix) -> Reduction {
    let n = matrix.len();
    let mut columns = matrix.columns.clone();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut scratch = Vec::new();
    for j in 0..n {
        while let Some(&low) = columns[j].last() {
            match owner[low] {
                Some(k) => {
                    let (left, right) = columns.split_at_mut(j);
                    add_columns(&right[0], &left[k], &mut scratch);
                    std::mem::swap(&mut right[0], &mut scratch);
                }
                None => {
                    owner[low] = Some(j);
                    break;
                }
            }
        }
    }
    let mut pairs = Vec::new();
    let mut is_birth = vec![false; n];
    for (j, col) in columns.iter().enumerate() {
        if let Some(&low) = col.last() {
            pairs.push((low, j));
            is_birth[low] = true;
        }
    }
    let essential = (0..n).filter(|&j| columns[j].is_empty() && !is_birth[j]).collect();
    Reduction { reduced: BoundaryMatrix { columns }, pairs, essential }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_all_essential() {
        let r = reduce(&BoundaryMatrix::zero(4));
        assert!(r.pairs.is_empty());
        assert_eq!(r.essential, vec![0, 1, 2, 3]);
    }

    #[test]
    fn two_points_merge() {
        // vertices 0, 1; edge 2 joining them
        let m = BoundaryMatrix { columns: vec![vec![], vec![], vec![0, 1]] };
        let r = reduce(&m);
        assert_eq!(r.pairs, vec![(1, 2)]);
        assert_eq!(r.essential, vec![0]);
    }

    #[test]
    fn triangle_boundary_and_fill() {
        // vertices 0,1,2; edges 3=01, 4=12, 5=02; face 6
        let m = BoundaryMatrix {
            columns: vec![vec![], vec![], vec![], vec![0, 1], vec![1, 2], vec![0, 2], vec![3, 4, 5]],
        };
        let r = reduce(&m);
        assert_eq!(r.pairs, vec![(1, 3), (2, 4), (5, 6)]);
        assert_eq!(r.essential, vec![0]);
        assert!(r.reduced.columns[5].is_empty());
    }

    #[test]
    fn column_addition() {
        let mut out = Vec::new();
        add_columns(&[1, 3, 5], &[2, 3, 6], &mut out);
        assert_eq!(out, vec![1, 2, 5, 6]);
        add_columns(&[1, 2], &[1, 2], &mut out);
        assert!(out.is_empty());
    }
}
