use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A planar point `[x, y]`.
pub type Point = [f64; 2];

/// An ordered list of planar points. Duplicates are allowed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl From<Vec<Point>> for PointCloud {
    fn from(points: Vec<Point>) -> Self {
        Self { points }
    }
}

/// Dense symmetric matrix of pairwise Euclidean distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Row `i` as a contiguous slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Largest pairwise distance (0 for a single point).
    pub fn max_distance(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// `min_i max_j d(i, j)`. At this scale one vertex is adjacent to every
    /// other, so the Rips complex is a cone and has no homology left.
    pub fn enclosing_radius(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().copied().fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Exact pairwise Euclidean distances of a non-empty cloud.
pub fn compute_distance_matrix(cloud: &PointCloud) -> Result<DistanceMatrix> {
    if cloud.is_empty() {
        return Err(Error::InvalidInput("point cloud is empty".into()));
    }
    if let Some(p) = cloud.points.iter().find(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::InvalidInput(format!("non-finite point {p:?}")));
    }
    let n = cloud.len();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let [xi, yi] = cloud.points[i];
        for j in (i + 1)..n {
            let [xj, yj] = cloud.points[j];
            let d = (xi - xj).hypot(yi - yj);
            data[i * n + j] = d;
            data[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, data })
}
