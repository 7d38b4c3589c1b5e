//! Persistence images and the per-wafer feature vector.
//!
//! A diagram is moved to birth-persistence coordinates, each point is
//! weighted by a linear ramp in persistence and spread as an isotropic
//! Gaussian, and the resulting surface is integrated exactly over each pixel
//! of a fixed grid. The Gaussian is separable, so a pixel integral is the
//! product of two one-dimensional CDF differences.

mod features;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ph_engine::{compute_persistence, PersistenceDiagram, PointCloud};

pub use features::{featurize_all, FeatureSet};

/// Each Gaussian is cut off this many standard deviations from its mean.
/// The discarded mass is below 1.3e-15 per axis; in exchange pixels far from
/// every point are exactly zero.
pub const TRUNCATION_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PIConfig {
    pub grid_nx: usize,
    pub grid_ny: usize,
    pub birth_range: [f64; 2],
    pub persistence_range: [f64; 2],
    pub sigma2: f64,
    pub cutoff_c: f64,
}

impl Default for PIConfig {
    fn default() -> Self {
        Self {
            grid_nx: 20,
            grid_ny: 20,
            birth_range: [0.0, 10.0],
            persistence_range: [0.0, 10.0],
            sigma2: 0.01,
            cutoff_c: 10.0,
        }
    }
}

impl PIConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.grid_nx == 0 || self.grid_ny == 0 {
            return bad(format!("grid {}x{} is empty", self.grid_nx, self.grid_ny));
        }
        for (name, [lo, hi]) in [
            ("birth_range", self.birth_range),
            ("persistence_range", self.persistence_range),
        ] {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return bad(format!("{name} [{lo}, {hi}] must have positive length"));
            }
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        if !(self.cutoff_c > 0.0 && self.cutoff_c.is_finite()) {
            return bad(format!("cutoff_c must be positive, got {}", self.cutoff_c));
        }
        Ok(())
    }

    /// Pixels per image.
    pub fn pixels(&self) -> usize {
        self.grid_nx * self.grid_ny
    }

    /// Length of the wafer feature vector (two images).
    pub fn feature_len(&self) -> usize {
        2 * self.pixels()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

/// A `grid_ny x grid_nx` image stored row-major: row `j` is a persistence
/// band, column `i` a birth band, both counted from the low end of the range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceImage {
    pub dim: usize,
    pub nx: usize,
    pub ny: usize,
    pub pixels: Vec<f64>,
}

impl PersistenceImage {
    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.pixels[j * self.nx + i]
    }

    pub fn total_mass(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn rows(&self) -> impl DoubleEndedIterator<Item = &[f64]> {
        self.pixels.chunks(self.nx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

/// `(b, d) -> (b, d - b)` for every pair.
pub fn to_birth_persistence(diagram: &PersistenceDiagram) -> Result<Vec<(f64, f64)>> {
    diagram
        .pairs
        .iter()
        .map(|p| {
            if p.is_finite() {
                Ok((p.birth, p.death - p.birth))
            } else {
                Err(Error::InvalidDiagram(format!(
                    "pair ({}, {}) is not finite",
                    p.birth, p.death
                )))
            }
        })
        .collect()
}

/// Linear ramp: 0 at zero persistence, 1 from persistence `c` upward.
pub fn weight(u: (f64, f64), c: f64) -> f64 {
    let t = u.1;
    if t <= 0.0 {
        0.0
    } else if t >= c {
        1.0
    } else {
        t / c
    }
}

/// `P(lo <= Z <= hi)` for a standard normal `Z`, accurate in both tails.
fn normal_mass(lo: f64, hi: f64) -> f64 {
    use std::f64::consts::FRAC_1_SQRT_2;
    if hi <= lo {
        return 0.0;
    }
    let upper = |z: f64| 0.5 * libm::erfc(z * FRAC_1_SQRT_2);
    if lo >= 0.0 {
        upper(lo) - upper(hi)
    } else if hi <= 0.0 {
        upper(-hi) - upper(-lo)
    } else {
        1.0 - upper(-lo) - upper(hi)
    }
}

/// Truncated Gaussian mass of each of `n` equal bins over `[lo, hi]`,
/// written into `out`. Returns the index range of nonzero bins.
fn axis_masses(mean: f64, sigma: f64, lo: f64, hi: f64, n: usize, out: &mut [f64]) -> (usize, usize) {
    let reach = TRUNCATION_SIGMAS * sigma;
    let (a, b) = (mean - reach, mean + reach);
    let h = (hi - lo) / n as f64;
    if b <= lo || a >= hi {
        return (0, 0);
    }
    let first = (((a - lo) / h).floor().max(0.0) as usize).min(n - 1);
    let last = ((((b - lo) / h).ceil()) as usize).clamp(first + 1, n);
    for (k, slot) in out.iter_mut().enumerate().take(last).skip(first) {
        let e0 = (lo + k as f64 * h).max(a);
        let e1 = if k + 1 == n { hi } else { lo + (k + 1) as f64 * h }.min(b);
        *slot = normal_mass((e0 - mean) / sigma, (e1 - mean) / sigma);
    }
    (first, last)
}

/// Persistence image of `diagram` under `cfg`.
pub fn compute_pi(diagram: &PersistenceDiagram, cfg: &PIConfig) -> Result<PersistenceImage> {
    cfg.validate()?;
    let points = to_birth_persistence(diagram)?;
    let (nx, ny) = (cfg.grid_nx, cfg.grid_ny);
    let sigma = cfg.sigma();
    let mut pixels = vec![0.0; nx * ny];
    let mut mx = vec![0.0; nx];
    let mut my = vec![0.0; ny];
    for &u in &points {
        let w = weight(u, cfg.cutoff_c);
        if w == 0.0 {
            continue;
        }
        let [b0, b1] = cfg.birth_range;
        let [p0, p1] = cfg.persistence_range;
        let (i0, i1) = axis_masses(u.0, sigma, b0, b1, nx, &mut mx);
        let (j0, j1) = axis_masses(u.1, sigma, p0, p1, ny, &mut my);
        for j in j0..j1 {
            let wy = w * my[j];
            let row = &mut pixels[j * nx..(j + 1) * nx];
            for i in i0..i1 {
                row[i] += wy * mx[i];
            }
        }
    }
    Ok(PersistenceImage {
        dim: diagram.dim,
        nx,
        ny,
        pixels,
    })
}

/// Concatenates the flattened dimension-0 and dimension-1 images.
pub fn feature_vector(h0: &PersistenceDiagram, h1: &PersistenceDiagram, cfg: &PIConfig) -> Result<FeatureVector> {
    let mut values = compute_pi(h0, cfg)?.pixels;
    values.extend(compute_pi(h1, cfg)?.pixels);
    Ok(FeatureVector { values })
}

/// Persistence diagrams of `cloud`, then [`feature_vector`].
pub fn featurize_wafer(cloud: &PointCloud, cfg: &PIConfig) -> Result<FeatureVector> {
    cfg.validate()?;
    let (h0, h1) = compute_persistence(cloud)?;
    feature_vector(&h0, &h1, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dgm(dim: usize, pairs: &[(f64, f64)]) -> PersistenceDiagram {
        PersistenceDiagram::from_pairs(dim, pairs)
    }

    #[test]
    fn birth_persistence_transform() {
        assert_eq!(to_birth_persistence(&dgm(1, &[(0.0, 3.0)])).unwrap(), vec![(0.0, 3.0)]);
        assert_eq!(to_birth_persistence(&dgm(1, &[(2.0, 9.0)])).unwrap(), vec![(2.0, 7.0)]);
        assert!(to_birth_persistence(&dgm(1, &[])).unwrap().is_empty());
        assert!(matches!(
            to_birth_persistence(&dgm(0, &[(0.0, f64::INFINITY)])),
            Err(Error::InvalidDiagram(_))
        ));
    }

    #[test]
    fn weight_ramp() {
        assert_eq!(weight((1.0, 0.0), 10.0), 0.0);
        assert_eq!(weight((1.0, 5.0), 10.0), 0.5);
        assert_eq!(weight((1.0, 20.0), 10.0), 1.0);
        assert_eq!(weight((1.0, -1.0), 10.0), 0.0);
    }

    #[test]
    fn empty_diagram_gives_zero_image() {
        let pi = compute_pi(&dgm(0, &[]), &PIConfig::default()).unwrap();
        assert_eq!(pi.pixels.len(), 400);
        assert!(pi.pixels.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn doubled_point_doubles_image() {
        let cfg = PIConfig::default();
        let one = compute_pi(&dgm(1, &[(1.3, 4.1)]), &cfg).unwrap();
        let two = compute_pi(&dgm(1, &[(1.3, 4.1), (1.3, 4.1)]), &cfg).unwrap();
        for (a, b) in one.pixels.iter().zip(&two.pixels) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn interior_point_keeps_its_weight() {
        let cfg = PIConfig::default();
        let pi = compute_pi(&dgm(1, &[(2.2, 6.1)]), &cfg).unwrap();
        assert!((pi.total_mass() - 0.39).abs() < 1e-12);
    }

    #[test]
    fn mass_on_grid_edge_is_halved() {
        // birth 0 sits on the grid's left edge, so half the Gaussian is cut
        let cfg = PIConfig::default();
        let pi = compute_pi(&dgm(0, &[(0.0, 3.0)]), &cfg).unwrap();
        assert!((pi.total_mass() - 0.15).abs() < 1e-12);
        let wide = PIConfig {
            birth_range: [-1.0, 10.0],
            ..cfg
        };
        let pi = compute_pi(&dgm(0, &[(0.0, 3.0)]), &wide).unwrap();
        assert!((pi.total_mass() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn far_pixels_are_exactly_zero() {
        // support [1.55, 3.15] x [3.05, 4.65] meets 4 x 4 pixels
        let pi = compute_pi(&dgm(1, &[(2.35, 6.2)]), &PIConfig::default()).unwrap();
        assert_eq!(pi.pixels.iter().filter(|&&v| v != 0.0).count(), 16);
        assert_eq!(pi.get(0, 0), 0.0);
    }

    #[test]
    fn normal_mass_tails() {
        assert!((normal_mass(-1.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-15);
        assert!((normal_mass(f64::NEG_INFINITY, f64::INFINITY) - 1.0).abs() < 1e-15);
        // upper tail stays accurate where 1 - cdf would cancel
        let tail = normal_mass(7.0, f64::INFINITY);
        assert!((tail / 1.279_812_543_885_835e-12 - 1.0).abs() < 1e-12);
        assert_eq!(normal_mass(2.0, 1.0), 0.0);
    }

    #[test]
    fn pixel_layout() {
        // persistence selects the row, birth the column
        let cfg = PIConfig {
            grid_nx: 4,
            grid_ny: 2,
            ..PIConfig::default()
        };
        let pi = compute_pi(&dgm(1, &[(8.75, 8.75 + 2.5)]), &cfg).unwrap();
        let (j, i) = (0..2)
            .flat_map(|j| (0..4).map(move |i| (j, i)))
            .max_by(|a, b| pi.get(a.0, a.1).total_cmp(&pi.get(b.0, b.1)))
            .unwrap();
        assert_eq!((j, i), (0, 3));
    }

    #[test]
    fn feature_vector_blocks() {
        let cfg = PIConfig::default();
        let cloud = PointCloud::new(vec![[0.0, 0.0], [3.0, 0.0]]);
        let v = featurize_wafer(&cloud, &cfg).unwrap();
        assert_eq!(v.values.len(), 800);
        assert!(v.values[400..].iter().all(|&x| x == 0.0));
        assert!(v.values[..400].iter().sum::<f64>() > 0.0);
    }

    #[test]
    fn rejects_bad_config() {
        let d = dgm(0, &[]);
        for cfg in [
            PIConfig {
                grid_nx: 0,
                ..PIConfig::default()
            },
            PIConfig {
                sigma2: 0.0,
                ..PIConfig::default()
            },
            PIConfig {
                cutoff_c: -1.0,
                ..PIConfig::default()
            },
            PIConfig {
                birth_range: [1.0, 1.0],
                ..PIConfig::default()
            },
        ] {
            assert!(matches!(compute_pi(&d, &cfg), Err(Error::InvalidParameter(_))));
        }
    }
}
