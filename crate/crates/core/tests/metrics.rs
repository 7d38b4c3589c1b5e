mod common;

use common::metrics::{check_axioms, check_brute_force, diag, metrics, random_tied_diagram, sup, TOL};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wafer_tda::diagram_metrics::{bottleneck_matching, wasserstein_matching, Slot};
use wafer_tda::ph_engine::PersistencePair;

#[test]
fn metric_axioms_hold_on_random_pairs() {
    check_axioms(600, 31);
}

#[test]
fn small_diagrams_match_brute_force() {
    check_brute_force(300, 34);
}

#[test]
fn distinct_diagrams_are_at_positive_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..200 {
        let a = random_tied_diagram(&mut rng, 6);
        let mut b = a.clone();
        b.pairs.push(PersistencePair::new(1.0, 1.5));
        for d in metrics(&a, &b) {
            assert!(d > 0.0);
        }
    }
}

#[test]
fn point_order_is_irrelevant() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..100 {
        let a = random_tied_diagram(&mut rng, 8);
        let b = random_tied_diagram(&mut rng, 8);
        let mut r = a.clone();
        r.pairs.reverse();
        for (x, y) in metrics(&a, &b).iter().zip(metrics(&r, &b)) {
            assert!((x - y).abs() <= TOL);
        }
    }
}

#[test]
fn matchings_realize_their_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    for _ in 0..100 {
        let a = random_tied_diagram(&mut rng, 6);
        let b = random_tied_diagram(&mut rng, 6);
        let cost_of = |s: &(Slot, Slot)| match *s {
            (Slot::Point(i), Slot::Point(j)) => sup(&a.pairs[i], &b.pairs[j]),
            (Slot::Point(i), Slot::Diagonal) => diag(&a.pairs[i]),
            (Slot::Diagonal, Slot::Point(j)) => diag(&b.pairs[j]),
            (Slot::Diagonal, Slot::Diagonal) => 0.0,
        };
        let w = wasserstein_matching(&a, &b, 2.0).unwrap();
        let sum: f64 = w.assignments.iter().map(|s| cost_of(s).powi(2)).sum();
        assert!((sum.sqrt() - w.cost).abs() <= TOL);
        let bn = bottleneck_matching(&a, &b).unwrap();
        let max = bn.assignments.iter().map(cost_of).fold(0.0, f64::max);
        assert!((max - bn.cost).abs() <= TOL);
        // every point of both diagrams appears exactly once
        let mut seen_a = vec![0; a.len()];
        let mut seen_b = vec![0; b.len()];
        for (x, y) in &w.assignments {
            if let Slot::Point(i) = x {
                seen_a[*i] += 1;
            }
            if let Slot::Point(j) = y {
                seen_b[*j] += 1;
            }
        }
        assert!(seen_a.iter().chain(&seen_b).all(|&c| c == 1));
    }
}
