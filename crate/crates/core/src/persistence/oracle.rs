//! Brute-force Betti numbers of sublevel complexes via dense Z/2 elimination.
//!
//! Independent of the column reduction: it recomputes homology from scratch
//! at a single filtration value, with no pairing or ordering involved.

use super::{persistence_pairs, FilteredComplex, PersistenceError};

/// Largest sublevel complex the oracle accepts.
pub const ORACLE_MAX_CELLS: usize = 5000;

/// Rank over Z/2 of a set of bit vectors.
fn gf2_rank(vectors: Vec<Vec<u64>>) -> usize {
    let mut basis: Vec<(usize, Vec<u64>)> = Vec::new();
    for mut v in vectors {
        for (pivot, b) in &basis {
            if v[pivot / 64] >> (pivot % 64) & 1 == 1 {
                v.iter_mut().zip(b).for_each(|(x, y)| *x ^= y);
            }
        }
        let lead = v.iter().enumerate().find(|(_, &w)| w != 0).map(|(i, &w)| i * 64 + w.trailing_zeros() as usize);
        if let Some(pivot) = lead {
            // Keep the basis fully reduced on pivots so the single pass above suffices.
            for (_, b) in basis.iter_mut() {
                if b[pivot / 64] >> (pivot % 64) & 1 == 1 {
                    b.iter_mut().zip(&v).for_each(|(x, y)| *x ^= y);
                }
            }
            basis.push((pivot, v));
        }
    }
    basis.len()
}

/// Betti numbers `(b0, b1)` of the subcomplex of cells with value `<= t`.
pub fn betti_oracle<K: FilteredComplex + ?Sized>(k: &K, t: f64) -> Result<(usize, usize), PersistenceError> {
    let cells: Vec<usize> = (0..k.len()).filter(|&c| k.value(c) <= t).collect();
    if cells.len() > ORACLE_MAX_CELLS {
        return Err(PersistenceError::TooLarge { cells: cells.len(), max: ORACLE_MAX_CELLS });
    }
    let mut local = vec![usize::MAX; k.len()];
    let mut by_dim: [Vec<usize>; 3] = Default::default();
    for &c in &cells {
        let d = k.dim(c);
        if d <= 2 {
            local[c] = by_dim[d].len();
            by_dim[d].push(c);
        }
    }
    let boundary_rank = |dim: usize| -> usize {
        let rows = by_dim[dim - 1].len();
        let words = rows.div_ceil(64).max(1);
        let vectors = by_dim[dim]
            .iter()
            .map(|&c| {
                let mut v = vec![0u64; words];
                for f in k.faces(c) {
                    let r = local[f];
                    v[r / 64] ^= 1 << (r % 64);
                }
                v
            })
            .collect();
        gf2_rank(vectors)
    };
    let rank1 = boundary_rank(1);
    let rank2 = boundary_rank(2);
    let b0 = by_dim[0].len() - rank1;
    let b1 = by_dim[1].len() - rank1 - rank2;
    Ok((b0, b1))
}

/// Why a complex failed [`check_against_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub enum OracleMismatch {
    /// Live classes in the computed pairs (dims 0 and 1) differ from the
    /// oracle's Betti numbers at `value`.
    Betti { value: f64, diagram: (usize, usize), oracle: (usize, usize) },
    Persistence(PersistenceError),
}

/// Compare live pair counts with [`betti_oracle`] at every distinct cell
/// value. Returns the number of levels checked.
pub fn check_against_oracle<K: FilteredComplex + ?Sized>(k: &K) -> Result<usize, OracleMismatch> {
    let pairs = persistence_pairs(k).map_err(OracleMismatch::Persistence)?;
    let mut levels: Vec<f64> = (0..k.len()).map(|c| k.value(c)).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    for &t in &levels {
        let alive = |dim: usize| pairs.iter().filter(|p| p.dim == dim && p.alive_at(t)).count();
        let diagram = (alive(0), alive(1));
        let oracle = betti_oracle(k, t).map_err(OracleMismatch::Persistence)?;
        if diagram != oracle {
            return Err(OracleMismatch::Betti { value: t, diagram, oracle });
        }
    }
    Ok(levels.len())
}

#[cfg(test)]
mod tests {
    use super::super::rips::{Simplex, SimplicialFiltration};
    use super::*;

    fn s(v: &[usize], value: f64) -> Simplex {
        Simplex { vertices: v.to_vec(), value }
    }

    #[test]
    fn single_vertex() {
        let k = SimplicialFiltration::new(vec![s(&[0], 0.0)]);
        assert_eq!(betti_oracle(&k, 0.0).unwrap(), (1, 0));
    }

    #[test]
    fn hollow_square() {
        let mut simplices: Vec<Simplex> = (0..4).map(|i| s(&[i], 0.0)).collect();
        simplices.extend([s(&[0, 1], 1.0), s(&[1, 2], 1.0), s(&[2, 3], 1.0), s(&[0, 3], 1.0)]);
        let k = SimplicialFiltration::new(simplices);
        assert_eq!(betti_oracle(&k, 1.0).unwrap(), (1, 1));
        assert_eq!(betti_oracle(&k, 0.5).unwrap(), (4, 0));
    }

    #[test]
    fn rank() {
        assert_eq!(gf2_rank(vec![vec![0b011], vec![0b110], vec![0b101]]), 2);
        assert_eq!(gf2_rank(vec![vec![0], vec![0]]), 0);
    }

    #[test]
    fn too_large() {
        let k = SimplicialFiltration::new((0..ORACLE_MAX_CELLS + 1).map(|i| s(&[i], 0.0)).collect());
        assert!(matches!(betti_oracle(&k, 0.0), Err(PersistenceError::TooLarge { .. })));
    }
}
