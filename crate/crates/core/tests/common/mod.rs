#![allow(dead_code)]

pub mod homology;
pub mod metrics;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wafer_tda::classifier::{init_model, loss_and_grad, MlpModel, ModelDims, Scaler};
use wafer_tda::diagram_metrics::wasserstein_distance;
use wafer_tda::persistence_image::{compute_pi, PIConfig};
use wafer_tda::ph_engine::{PersistenceDiagram, PersistencePair};

pub fn random_diagram(rng: &mut ChaCha8Rng, max_points: usize) -> PersistenceDiagram {
    let n = rng.random_range(0..=max_points);
    let pairs = (0..n)
        .map(|_| {
            let b = rng.random_range(0.0..8.0);
            PersistencePair::new(b, b + rng.random_range(0.0..6.0))
        })
        .collect();
    PersistenceDiagram::new(1, pairs)
}

/// Lipschitz constant of the image map in L1 against W1, for the linear
/// weight with cutoff `c` and Gaussian width `sigma`.
pub fn stability_constant(cfg: &PIConfig) -> f64 {
    5f64.sqrt() / cfg.cutoff_c + (10.0 / std::f64::consts::PI).sqrt() / cfg.sigma()
}

/// Checks `|I(a) - I(b)|_1 <= K W1(a, b)` on `trials` random pairs. Half the
/// pairs are unrelated diagrams, half are small perturbations of one diagram.
/// Returns the number of violations and the largest observed ratio.
pub fn stability_violations(trials: usize, seed: u64) -> (usize, f64) {
    let cfg = PIConfig::default();
    let k = stability_constant(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let a = random_diagram(&mut rng, 20);
        let b = if trial % 2 == 0 {
            random_diagram(&mut rng, 20)
        } else {
            let mut b = a.clone();
            for p in &mut b.pairs {
                p.birth = (p.birth + rng.random_range(-0.2..0.2)).max(0.0);
                p.death = (p.death + rng.random_range(-0.2..0.2)).max(p.birth);
            }
            b
        };
        let (ia, ib) = (compute_pi(&a, &cfg).unwrap(), compute_pi(&b, &cfg).unwrap());
        let lhs: f64 = ia.pixels.iter().zip(&ib.pixels).map(|(x, y)| (x - y).abs()).sum();
        let w1 = wasserstein_distance(&a, &b, 1.0).unwrap();
        if lhs > k * w1 + 1e-12 {
            violations += 1;
        }
        if w1 > 0.0 {
            worst = worst.max(lhs / w1);
        }
    }
    (violations, worst)
}

/// Relative error with the denominator floored at `1e-6`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Parameter addressed by a gradient check.
#[derive(Debug, Clone, Copy)]
pub enum Param {
    W1(usize),
    B1(usize),
    W2(usize),
    B2(usize),
}

fn slot(model: &mut MlpModel, p: Param) -> &mut f64 {
    match p {
        Param::W1(i) => &mut model.w1[i],
        Param::B1(i) => &mut model.b1[i],
        Param::W2(i) => &mut model.w2[i],
        Param::B2(i) => &mut model.b2[i],
    }
}

/// Sparse non-negative inputs resembling image features, with an occasional
/// dense row.
fn random_batch(rng: &mut ChaCha8Rng, dims: ModelDims, n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let xs = (0..n)
        .map(|_| {
            let density = if rng.random_bool(0.2) { 1.0 } else { 0.1 };
            (0..dims.input)
                .map(|_| {
                    if rng.random_bool(density) {
                        rng.random_range(0.0..2.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let labels = (0..n).map(|_| rng.random_range(0..dims.classes)).collect();
    (xs, labels)
}

/// Compares backpropagation with central differences on one random batch.
/// Checks every parameter when `sample` is `None`, otherwise that many
/// randomly chosen ones per tensor. Returns the largest relative error.
pub fn gradient_check(seed: u64, dims: ModelDims, sample: Option<usize>) -> f64 {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = init_model(dims, seed);
    for b in model.b1.iter_mut().chain(model.b2.iter_mut()) {
        *b = rng.random_range(-0.1..0.1);
    }
    let n = rng.random_range(1..=8);
    let (xs, labels) = random_batch(&mut rng, dims, n);
    if seed % 2 == 1 {
        let flat: Vec<f64> = xs.concat();
        model.scaler = Some(Scaler::fit(&flat, dims.input));
    }
    let batch: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let (_, grads) = loss_and_grad(&model, &batch, &labels).unwrap();

    let mut params = Vec::new();
    let mut pick = |len: usize, make: fn(usize) -> Param, rng: &mut ChaCha8Rng| match sample {
        None => params.extend((0..len).map(make)),
        Some(k) => params.extend((0..k).map(|_| make(rng.random_range(0..len)))),
    };
    pick(model.w1.len(), Param::W1, &mut rng);
    pick(model.b1.len(), Param::B1, &mut rng);
    pick(model.w2.len(), Param::W2, &mut rng);
    pick(model.b2.len(), Param::B2, &mut rng);

    let mut worst: f64 = 0.0;
    for p in params {
        let analytic = match p {
            Param::W1(i) => grads.w1[i],
            Param::B1(i) => grads.b1[i],
            Param::W2(i) => grads.w2[i],
            Param::B2(i) => grads.b2[i],
        };
        let orig = *slot(&mut model, p);
        *slot(&mut model, p) = orig + H;
        let (up, _) = loss_and_grad(&model, &batch, &labels).unwrap();
        *slot(&mut model, p) = orig - H;
        let (down, _) = loss_and_grad(&model, &batch, &labels).unwrap();
        *slot(&mut model, p) = orig;
        worst = worst.max(relative_error(analytic, (up - down) / (2.0 * H)));
    }
    worst
}
