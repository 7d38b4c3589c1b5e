use std::collections::HashMap;

use super::filtration::FiltrationSimplex;
use crate::error::{Error, Result};

/// Betti numbers `(b0, b1)` of a complex of dimension at most 2, from the
/// ranks of its boundary matrices over the two-element field.
///
/// Deliberately naive: this exists to cross-check the persistence engine.
pub fn oracle_betti(simplices: &[FiltrationSimplex]) -> Result<(usize, usize)> {
    let mut index: [HashMap<&[usize], usize>; 3] = Default::default();
    for s in simplices {
        let k = s.vertices.len();
        if !(1..=3).contains(&k) {
            return Err(Error::InvalidComplex(format!(
                "simplex {:?} has unsupported dimension",
                s.vertices
            )));
        }
        if s.vertices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidComplex(format!(
                "vertices {:?} are not strictly increasing",
                s.vertices
            )));
        }
        let next = index[k - 1].len();
        index[k - 1].entry(&s.vertices).or_insert(next);
    }
    for s in simplices {
        for face in s.facets() {
            if !index[face.len() - 1].contains_key(face.as_slice()) {
                return Err(Error::InvalidComplex(format!(
                    "face {face:?} of {:?} is missing",
                    s.vertices
                )));
            }
        }
    }

    let boundary = |k: usize| -> Vec<Vec<u64>> {
        let rows = index[k - 1].len();
        let words = rows.div_ceil(64).max(1);
        let mut cols = vec![vec![0u64; words]; index[k].len()];
        for (simplex, &c) in &index[k] {
            let s = FiltrationSimplex {
                vertices: simplex.to_vec(),
                diameter: 0.0,
            };
            for face in s.facets() {
                let r = index[k - 1][face.as_slice()];
                cols[c][r / 64] ^= 1 << (r % 64);
            }
        }
        cols
    };

    let (n0, n1) = (index[0].len(), index[1].len());
    let r1 = gf2_rank(boundary(1));
    let r2 = gf2_rank(boundary(2));
    Ok((n0 - r1, n1 - r1 - r2))
}

/// Rank of a set of bit vectors over the two-element field.
fn gf2_rank(mut vectors: Vec<Vec<u64>>) -> usize {
    let mut rank = 0;
    let bits = vectors.first().map_or(0, |v| v.len() * 64);
    for bit in 0..bits {
        let (w, m) = (bit / 64, 1u64 << (bit % 64));
        let Some(p) = (rank..vectors.len()).find(|&i| vectors[i][w] & m != 0) else {
            continue;
        };
        vectors.swap(rank, p);
        let pivot = vectors[rank].clone();
        for v in vectors.iter_mut().skip(rank + 1) {
            if v[w] & m != 0 {
                for (a, b) in v.iter_mut().zip(&pivot) {
                    *a ^= b;
                }
            }
        }
        rank += 1;
    }
    rank
}
