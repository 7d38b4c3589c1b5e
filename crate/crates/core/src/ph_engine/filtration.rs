use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::distance::DistanceMatrix;
use crate::error::{Error, Result};

/// A simplex of the Rips filtration together with the scale at which it enters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiltrationSimplex {
    /// Strictly increasing vertex indices.
    pub vertices: Vec<usize>,
    pub diameter: f64,
}

impl FiltrationSimplex {
    pub fn dim(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Filtration order: diameter, then dimension, then lexicographic vertices.
    pub fn filtration_cmp(&self, other: &Self) -> Ordering {
        self.diameter
            .total_cmp(&other.diameter)
            .then(self.vertices.len().cmp(&other.vertices.len()))
            .then_with(|| self.vertices.cmp(&other.vertices))
    }

    /// All codimension-one faces (empty for a vertex).
    pub fn facets(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        let k = if self.vertices.len() > 1 {
            self.vertices.len()
        } else {
            0
        };
        (0..k).map(move |skip| {
            self.vertices
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, &v)| v)
                .collect()
        })
    }
}

/// Every simplex of dimension `<= max_dim` whose diameter is `<= max_scale`,
/// sorted in filtration order.
///
/// This materializes the whole complex; it is meant for small clouds and
/// for checking the streaming persistence computation.
pub fn build_rips_filtration(dm: &DistanceMatrix, max_dim: usize, max_scale: f64) -> Result<Vec<FiltrationSimplex>> {
    if !(1..=2).contains(&max_dim) {
        return Err(Error::InvalidParameter(format!(
            "max_dim must be 1 or 2, got {max_dim}"
        )));
    }
    if max_scale.is_nan() || max_scale <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "max_scale must be positive, got {max_scale}"
        )));
    }
    let n = dm.len();
    let mut out: Vec<FiltrationSimplex> = (0..n)
        .map(|v| FiltrationSimplex {
            vertices: vec![v],
            diameter: 0.0,
        })
        .collect();
    for i in 0..n {
        for j in (i + 1)..n {
            let dij = dm.get(i, j);
            if dij > max_scale {
                continue;
            }
            out.push(FiltrationSimplex {
                vertices: vec![i, j],
                diameter: dij,
            });
            if max_dim < 2 {
                continue;
            }
            for k in (j + 1)..n {
                let diam = dij.max(dm.get(i, k)).max(dm.get(j, k));
                if diam <= max_scale {
                    out.push(FiltrationSimplex {
                        vertices: vec![i, j, k],
                        diameter: diam,
                    });
                }
            }
        }
    }
    out.sort_by(FiltrationSimplex::filtration_cmp);
    Ok(out)
}
