use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wafer_tda::diagram_metrics::{bottleneck_distance, wasserstein_distance};
use wafer_tda::ph_engine::{PersistenceDiagram, PersistencePair};

pub const TOL: f64 = 1e-9;

pub fn random_tied_diagram(rng: &mut ChaCha8Rng, max_points: usize) -> PersistenceDiagram {
    let n = rng.random_range(0..=max_points);
    let pairs = (0..n)
        .map(|_| {
            // a coarse grid now and then produces ties and repeated points
            if rng.random_bool(0.2) {
                let b = rng.random_range(0..4) as f64;
                PersistencePair::new(b, b + rng.random_range(1..4) as f64)
            } else {
                let b = rng.random_range(0.0..5.0);
                PersistencePair::new(b, b + rng.random_range(0.0..5.0))
            }
        })
        .collect();
    PersistenceDiagram::new(1, pairs)
}

pub fn metrics(a: &PersistenceDiagram, b: &PersistenceDiagram) -> [f64; 3] {
    [
        wasserstein_distance(a, b, 1.0).unwrap(),
        wasserstein_distance(a, b, 2.0).unwrap(),
        bottleneck_distance(a, b).unwrap(),
    ]
}

/// Symmetry, triangle inequality, identity and ordering of W1, W2 and the
/// bottleneck distance on `trials` random triples.
pub fn check_axioms(trials: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let a = random_tied_diagram(&mut rng, 10);
        let b = random_tied_diagram(&mut rng, 10);
        let c = random_tied_diagram(&mut rng, 10);
        let ab = metrics(&a, &b);
        let ba = metrics(&b, &a);
        let ac = metrics(&a, &c);
        let bc = metrics(&b, &c);
        for k in 0..3 {
            assert_eq!(ab[k], ba[k], "symmetry {k}");
            assert!(ac[k] <= ab[k] + bc[k] + TOL, "triangle {k}");
            assert!(ab[k] >= 0.0);
        }
        for d in metrics(&a, &a) {
            assert!(d.abs() <= TOL, "identity {d}");
        }
        // bottleneck never exceeds any Wasserstein distance
        assert!(ab[2] <= ab[1] + TOL && ab[2] <= ab[0] + TOL && ab[1] <= ab[0] + TOL);
    }
}

pub fn sup(a: &PersistencePair, b: &PersistencePair) -> f64 {
    (a.birth - b.birth).abs().max((a.death - b.death).abs())
}

pub fn diag(a: &PersistencePair) -> f64 {
    (a.death - a.birth) / 2.0
}

/// Every partial matching of `a` into `b`, the rest going to the diagonal;
/// returns the per-edge costs of each.
pub fn all_matchings(a: &[PersistencePair], b: &[PersistencePair]) -> Vec<Vec<f64>> {
    fn go(
        i: usize,
        a: &[PersistencePair],
        b: &[PersistencePair],
        used: &mut Vec<bool>,
        costs: &mut Vec<f64>,
        out: &mut Vec<Vec<f64>>,
    ) {
        if i == a.len() {
            let mut all = costs.clone();
            all.extend(b.iter().zip(used.iter()).filter(|(_, &u)| !u).map(|(p, _)| diag(p)));
            out.push(all);
            return;
        }
        costs.push(diag(&a[i]));
        go(i + 1, a, b, used, costs, out);
        costs.pop();
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                costs.push(sup(&a[i], &b[j]));
                go(i + 1, a, b, used, costs, out);
                costs.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(0, a, b, &mut vec![false; b.len()], &mut Vec::new(), &mut out);
    out
}

pub fn brute_force(a: &PersistenceDiagram, b: &PersistenceDiagram) -> [f64; 3] {
    let matchings = all_matchings(&a.pairs, &b.pairs);
    let wp = |p: f64| {
        matchings
            .iter()
            .map(|m| m.iter().map(|c| c.powf(p)).sum::<f64>().powf(1.0 / p))
            .fold(f64::INFINITY, f64::min)
    };
    let bottleneck = matchings
        .iter()
        .map(|m| m.iter().copied().fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min);
    [wp(1.0), wp(2.0), bottleneck]
}

/// Compares with exhaustive matching on diagrams of at most 5 points.
pub fn check_brute_force(trials: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let a = random_tied_diagram(&mut rng, 5);
        let b = random_tied_diagram(&mut rng, 5);
        let fast = metrics(&a, &b);
        let slow = brute_force(&a, &b);
        for k in 0..3 {
            assert!(
                (fast[k] - slow[k]).abs() <= TOL,
                "metric {k}: {} vs {} for {a:?} {b:?}",
                fast[k],
                slow[k]
            );
        }
    }
}
