//! Exact p-Wasserstein and bottleneck distances between persistence diagrams.
//!
//! Both diagrams are augmented with the diagonal projections of the other's
//! points, so that every point may be matched either to a point of the other
//! diagram or to the diagonal. The ground cost is the sup-norm on the plane.

mod hungarian;
mod matching;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ph_engine::{PersistenceDiagram, PersistencePair};

/// One side of a matched pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Point(usize),
    Diagonal,
}

/// An optimal matching between two diagrams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramMatching {
    /// `(slot in first diagram, slot in second diagram)`; diagonal-diagonal
    /// pairs are omitted.
    pub assignments: Vec<(Slot, Slot)>,
    /// The distance realized by the matching.
    pub cost: f64,
}

#[inline]
fn sup_dist(a: &PersistencePair, b: &PersistencePair) -> f64 {
    (a.birth - b.birth).abs().max((a.death - b.death).abs())
}

#[inline]
fn to_diagonal(a: &PersistencePair) -> f64 {
    (a.death - a.birth) / 2.0
}

fn check_pair(a: &PersistenceDiagram, b: &PersistenceDiagram) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::InvalidDiagram(format!(
            "diagrams have different dimensions ({} vs {})",
            a.dim, b.dim
        )));
    }
    for p in a.pairs.iter().chain(&b.pairs) {
        if !p.is_finite() {
            return Err(Error::InvalidDiagram(format!(
                "pair ({}, {}) is not finite",
                p.birth, p.death
            )));
        }
    }
    Ok(())
}

/// Sup-norm costs of the augmented `(n + m) x (n + m)` problem, row-major.
///
/// Rows: points of `a`, then diagonal slots for points of `b`.
/// Columns: points of `b`, then diagonal slots for points of `a`.
fn augmented_costs(a: &[PersistencePair], b: &[PersistencePair]) -> (usize, Vec<f64>) {
    let (n, m) = (a.len(), b.len());
    let size = n + m;
    let mut cost = vec![f64::INFINITY; size * size];
    for (i, p) in a.iter().enumerate() {
        let row = &mut cost[i * size..(i + 1) * size];
        for (j, q) in b.iter().enumerate() {
            row[j] = sup_dist(p, q);
        }
        row[m + i] = to_diagonal(p);
    }
    for (j, q) in b.iter().enumerate() {
        let row = &mut cost[(n + j) * size..(n + j + 1) * size];
        row[j] = to_diagonal(q);
        row[m..].fill(0.0);
    }
    (size, cost)
}

/// True when `(b, a)` is the canonical argument order. Both distances are
/// computed in canonical order, which makes them exactly symmetric.
fn swapped(a: &PersistenceDiagram, b: &PersistenceDiagram) -> bool {
    let key = |d: &PersistenceDiagram| {
        let mut v: Vec<(f64, f64)> = d.pairs.iter().map(|p| (p.birth, p.death)).collect();
        v.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
        v
    };
    let (ka, kb) = (key(a), key(b));
    let cmp = ka.len().cmp(&kb.len()).then_with(|| {
        ka.iter()
            .zip(&kb)
            .map(|(x, y)| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    cmp.is_gt()
}

fn unswap(mut m: DiagramMatching) -> DiagramMatching {
    m.assignments.iter_mut().for_each(|s| *s = (s.1, s.0));
    m
}

fn slots(n: usize, m: usize, row: usize, col: usize) -> Option<(Slot, Slot)> {
    let left = if row < n { Slot::Point(row) } else { Slot::Diagonal };
    let right = if col < m { Slot::Point(col) } else { Slot::Diagonal };
    match (left, right) {
        (Slot::Diagonal, Slot::Diagonal) => None,
        pair => Some(pair),
    }
}

/// Optimal matching for the p-Wasserstein distance, `p >= 1` (finite).
pub fn wasserstein_matching(a: &PersistenceDiagram, b: &PersistenceDiagram, p: f64) -> Result<DiagramMatching> {
    if p.is_nan() || p < 1.0 || p.is_infinite() {
        return Err(Error::InvalidParameter(format!(
            "Wasserstein order must be finite and >= 1, got {p}"
        )));
    }
    check_pair(a, b)?;
    if swapped(a, b) {
        return Ok(unswap(wasserstein_matching(b, a, p)?));
    }
    let (n, m) = (a.len(), b.len());
    let (size, mut cost) = augmented_costs(&a.pairs, &b.pairs);
    if p != 1.0 {
        cost.iter_mut().for_each(|c| *c = c.powf(p));
    }
    let assignment = hungarian::solve(size, &cost);
    let total: f64 = assignment.iter().enumerate().map(|(r, &c)| cost[r * size + c]).sum();
    let assignments = assignment
        .iter()
        .enumerate()
        .filter_map(|(r, &c)| slots(n, m, r, c))
        .collect();
    Ok(DiagramMatching {
        assignments,
        cost: total.powf(1.0 / p),
    })
}

/// `W_p(a, b) = (inf over matchings of sum |u - g(u)|_inf^p)^(1/p)`.
/// `p = inf` gives the bottleneck distance.
pub fn wasserstein_distance(a: &PersistenceDiagram, b: &PersistenceDiagram, p: f64) -> Result<f64> {
    if p == f64::INFINITY {
        return bottleneck_distance(a, b);
    }
    Ok(wasserstein_matching(a, b, p)?.cost)
}

/// Matching minimizing the largest single sup-norm cost.
pub fn bottleneck_matching(a: &PersistenceDiagram, b: &PersistenceDiagram) -> Result<DiagramMatching> {
    check_pair(a, b)?;
    if swapped(a, b) {
        return Ok(unswap(bottleneck_matching(b, a)?));
    }
    let (n, m) = (a.len(), b.len());
    let (size, cost) = augmented_costs(&a.pairs, &b.pairs);

    let mut candidates: Vec<f64> = cost.iter().copied().filter(|c| c.is_finite()).collect();
    candidates.push(0.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    // The largest candidate always admits a perfect matching.
    let (mut lo, mut hi) = (0usize, candidates.len() - 1);
    let mut best = matching::perfect(size, |r, c| cost[r * size + c] <= candidates[hi])
        .expect("augmented problem always has a perfect matching");
    while lo < hi {
        let mid = (lo + hi) / 2;
        match matching::perfect(size, |r, c| cost[r * size + c] <= candidates[mid]) {
            Some(found) => {
                best = found;
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    let assignments = best
        .iter()
        .enumerate()
        .filter_map(|(r, &c)| slots(n, m, r, c))
        .collect();
    Ok(DiagramMatching {
        assignments,
        cost: candidates[hi],
    })
}

pub fn bottleneck_distance(a: &PersistenceDiagram, b: &PersistenceDiagram) -> Result<f64> {
    Ok(bottleneck_matching(a, b)?.cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dgm(pairs: &[(f64, f64)]) -> PersistenceDiagram {
        PersistenceDiagram::from_pairs(1, pairs)
    }

    #[test]
    fn identical_diagrams() {
        let a = dgm(&[(0.0, 2.0), (1.0, 4.0), (0.5, 0.7)]);
        assert_eq!(wasserstein_distance(&a, &a, 1.0).unwrap(), 0.0);
        assert_eq!(wasserstein_distance(&a, &a, 2.0).unwrap(), 0.0);
        assert_eq!(bottleneck_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn single_point_against_empty() {
        let a = dgm(&[(0.0, 2.0)]);
        let e = dgm(&[]);
        assert_eq!(wasserstein_distance(&a, &e, 1.0).unwrap(), 1.0);
        assert_eq!(bottleneck_distance(&a, &e).unwrap(), 1.0);
        let m = wasserstein_matching(&a, &e, 1.0).unwrap();
        assert_eq!(m.assignments, vec![(Slot::Point(0), Slot::Diagonal)]);
    }

    #[test]
    fn direct_match_beats_diagonal() {
        // direct: max(0, 1) = 1; via diagonal: 1 + 1.5
        let a = dgm(&[(1.0, 3.0)]);
        let b = dgm(&[(1.0, 4.0)]);
        assert_eq!(wasserstein_distance(&a, &b, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn bottleneck_small_point_to_diagonal() {
        let a = dgm(&[(0.0, 10.0), (0.0, 1.0)]);
        let b = dgm(&[(0.0, 10.0)]);
        assert_eq!(bottleneck_distance(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn both_empty() {
        let e = dgm(&[]);
        assert_eq!(wasserstein_distance(&e, &e, 1.0).unwrap(), 0.0);
        assert_eq!(bottleneck_distance(&e, &e).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = dgm(&[(0.0, 1.0)]);
        assert!(matches!(
            wasserstein_distance(&a, &a, 0.5),
            Err(Error::InvalidParameter(_))
        ));
        let inf = dgm(&[(0.0, f64::INFINITY)]);
        assert!(matches!(
            wasserstein_distance(&inf, &a, 1.0),
            Err(Error::InvalidDiagram(_))
        ));
        let other_dim = PersistenceDiagram::from_pairs(0, &[(0.0, 1.0)]);
        assert!(bottleneck_distance(&a, &other_dim).is_err());
    }

    #[test]
    fn infinite_order_is_bottleneck() {
        let a = dgm(&[(0.0, 10.0), (0.0, 1.0)]);
        let b = dgm(&[(0.0, 10.0)]);
        assert_eq!(wasserstein_distance(&a, &b, f64::INFINITY).unwrap(), 0.5);
    }

    #[test]
    fn matching_covers_every_point_once() {
        let a = dgm(&[(0.0, 2.0), (1.0, 4.0), (3.0, 3.5)]);
        let b = dgm(&[(0.1, 2.2), (5.0, 9.0)]);
        for m in [
            wasserstein_matching(&a, &b, 2.0).unwrap(),
            bottleneck_matching(&a, &b).unwrap(),
        ] {
            let mut left = vec![0; a.len()];
            let mut right = vec![0; b.len()];
            for (l, r) in &m.assignments {
                if let Slot::Point(i) = l {
                    left[*i] += 1;
                }
                if let Slot::Point(j) = r {
                    right[*j] += 1;
                }
            }
            assert!(left.iter().chain(&right).all(|&c| c == 1));
        }
    }
}
