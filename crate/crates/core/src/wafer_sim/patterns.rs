use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Label, WAFER_RADIUS};
use crate::ph_engine::{Point, PointCloud};

/// Blob centers are drawn uniformly on a disk of this radius.
pub const CLUSTER_CENTER_RADIUS: f64 = 7.0;

/// A per-wafer random stream together with the seed that created it.
pub struct WaferRng {
    seed: u64,
    rng: ChaCha8Rng,
}

impl WaferRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Parameters actually drawn while generating a wafer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "snake_case")]
pub enum PatternMeta {
    Random {
        n_random: usize,
    },
    Ring {
        n_ring: usize,
        r0: f64,
        delta: f64,
        n_noise: usize,
    },
    Scratch {
        n_scratch: usize,
        a: f64,
        b: f64,
        k: f64,
        theta: f64,
        /// scratch points left after clipping to the wafer
        n_kept: usize,
        n_noise: usize,
    },
    Dense {
        n_dense: usize,
        n_noise: usize,
    },
    Cluster {
        n_cluster: usize,
        center_radius: f64,
        blobs: Vec<BlobMeta>,
        /// blob points left after clipping to the wafer
        n_kept: usize,
        n_noise: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobMeta {
    pub center: Point,
    pub std: f64,
    pub n: usize,
}

/// A labeled wafer map: defect coordinates on the radius-10 disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaferMap {
    pub label: Label,
    pub seed: u64,
    pub points: Vec<Point>,
    pub meta: PatternMeta,
}

impl WaferMap {
    /// Generates a wafer of class `label` from its own seed.
    pub fn generate(label: Label, seed: u64) -> Self {
        let mut rng = WaferRng::new(seed);
        match label {
            Label::Random => gen_random(&mut rng),
            Label::Ring => gen_ring(&mut rng),
            Label::Scratch => gen_scratch(&mut rng),
            Label::Dense => gen_dense(&mut rng),
            Label::Cluster => gen_cluster(&mut rng),
        }
    }

    pub fn cloud(&self) -> PointCloud {
        PointCloud::new(self.points.clone())
    }
}

fn polar_points(rng: &mut ChaCha8Rng, n: usize, r_lo: f64, r_hi: f64, out: &mut Vec<Point>) {
    for _ in 0..n {
        let theta = rng.random_range(0.0..TAU);
        let r = if r_hi > r_lo {
            rng.random_range(r_lo..r_hi)
        } else {
            r_lo
        };
        out.push([r * theta.cos(), r * theta.sin()]);
    }
}

/// Appends Uniform{10..60} uniformly-placed defects; returns how many.
fn append_noise(rng: &mut ChaCha8Rng, out: &mut Vec<Point>) -> usize {
    let n = rng.random_range(10..=60);
    polar_points(rng, n, 0.0, WAFER_RADIUS, out);
    n
}

fn on_wafer(p: &Point) -> bool {
    p[0] * p[0] + p[1] * p[1] <= WAFER_RADIUS * WAFER_RADIUS
}

pub fn gen_random(rng: &mut WaferRng) -> WaferMap {
    let n = rng.rng.random_range(10..=60);
    let mut points = Vec::with_capacity(n);
    polar_points(&mut rng.rng, n, 0.0, WAFER_RADIUS, &mut points);
    WaferMap {
        label: Label::Random,
        seed: rng.seed,
        points,
        meta: PatternMeta::Random { n_random: n },
    }
}

pub fn gen_ring(rng: &mut WaferRng) -> WaferMap {
    let r = &mut rng.rng;
    let n_ring = r.random_range(150..=300);
    let r0 = r.random_range(3.0..6.0);
    let delta = r.random_range(0.0..4.0);
    let mut points = Vec::with_capacity(n_ring + 60);
    polar_points(r, n_ring, r0, r0 + delta, &mut points);
    let n_noise = append_noise(r, &mut points);
    WaferMap {
        label: Label::Ring,
        seed: rng.seed,
        points,
        meta: PatternMeta::Ring {
            n_ring,
            r0,
            delta,
            n_noise,
        },
    }
}

/// Points `(x, k x^2)` for `n` evenly spaced `x` from `a` to `b` inclusive,
/// rotated counter-clockwise by `theta`. Not clipped.
pub fn scratch_curve(a: f64, b: f64, k: f64, n: usize, theta: f64) -> Vec<Point> {
    let (sin, cos) = theta.sin_cos();
    (0..n)
        .map(|i| {
            let x = if n == 1 {
                a
            } else {
                a + (b - a) * i as f64 / (n - 1) as f64
            };
            let y = k * x * x;
            [cos * x - sin * y, sin * x + cos * y]
        })
        .collect()
}

pub fn gen_scratch(rng: &mut WaferRng) -> WaferMap {
    let r = &mut rng.rng;
    let (a, b) = loop {
        let a: f64 = r.random_range(-10.0..10.0);
        let b: f64 = r.random_range(-10.0..10.0);
        if (a - b).abs() > 5.0 {
            break (a, b);
        }
    };
    let k = loop {
        let k: f64 = r.random_range(-1.0 / 15.0..1.0 / 15.0);
        if k != 0.0 {
            break k;
        }
    };
    let n_scratch = r.random_range(50..=100);
    let theta = r.random_range(0.0..TAU);
    let mut points: Vec<Point> = scratch_curve(a, b, k, n_scratch, theta)
        .into_iter()
        .filter(on_wafer)
        .collect();
    let n_kept = points.len();
    let n_noise = append_noise(r, &mut points);
    WaferMap {
        label: Label::Scratch,
        seed: rng.seed,
        points,
        meta: PatternMeta::Scratch {
            n_scratch,
            a,
            b,
            k,
            theta,
            n_kept,
            n_noise,
        },
    }
}

pub fn gen_dense(rng: &mut WaferRng) -> WaferMap {
    let r = &mut rng.rng;
    let n_dense = r.random_range(150..=300);
    let mut points = Vec::with_capacity(n_dense + 60);
    polar_points(r, n_dense, 0.0, WAFER_RADIUS, &mut points);
    let n_noise = append_noise(r, &mut points);
    WaferMap {
        label: Label::Dense,
        seed: rng.seed,
        points,
        meta: PatternMeta::Dense { n_dense, n_noise },
    }
}

pub fn gen_cluster(rng: &mut WaferRng) -> WaferMap {
    let r = &mut rng.rng;
    let n_cluster = r.random_range(150..=300);
    let centers = r.random_range(1..=3usize);
    let mut blobs = Vec::with_capacity(centers);
    let mut points = Vec::with_capacity(n_cluster + 60);
    for c in 0..centers {
        // as even as possible, earlier blobs take the remainder
        let n = n_cluster / centers + usize::from(c < n_cluster % centers);
        let rho = CLUSTER_CENTER_RADIUS * r.random::<f64>().sqrt();
        let phi = r.random_range(0.0..TAU);
        let center = [rho * phi.cos(), rho * phi.sin()];
        let std = r.random_range(0.1..2.0);
        for _ in 0..n {
            let dx: f64 = StandardNormal.sample(r);
            let dy: f64 = StandardNormal.sample(r);
            let p = [center[0] + std * dx, center[1] + std * dy];
            if on_wafer(&p) {
                points.push(p);
            }
        }
        blobs.push(BlobMeta { center, std, n });
    }
    let n_kept = points.len();
    let n_noise = append_noise(r, &mut points);
    WaferMap {
        label: Label::Cluster,
        seed: rng.seed,
        points,
        meta: PatternMeta::Cluster {
            n_cluster,
            center_radius: CLUSTER_CENTER_RADIUS,
            blobs,
            n_kept,
            n_noise,
        },
    }
}
