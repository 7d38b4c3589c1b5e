use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wafer_tda::ph_engine::{
    build_rips_filtration, compute_distance_matrix, compute_persistence, oracle_betti, PersistenceDiagram, PointCloud,
};

fn alive(d: &PersistenceDiagram, eps: f64) -> usize {
    d.pairs.iter().filter(|p| p.birth <= eps && eps < p.death).count()
}

/// Betti numbers from the diagrams and from the oracle agree at every scale
/// where the complex changes.
pub fn check_cloud(points: Vec<[f64; 2]>) -> usize {
    let cloud = PointCloud::new(points);
    let (h0, h1) = compute_persistence(&cloud).unwrap();
    let dm = compute_distance_matrix(&cloud).unwrap();
    let top = dm.max_distance().max(1.0);
    let filtration = build_rips_filtration(&dm, 2, top).unwrap();
    let mut scales: Vec<f64> = filtration.iter().map(|s| s.diameter).collect();
    scales.dedup();
    for &eps in &scales {
        let end = filtration.partition_point(|s| s.diameter <= eps);
        let (b0, b1) = oracle_betti(&filtration[..end]).unwrap();
        assert_eq!(b0, 1 + alive(&h0, eps), "b0 at {eps} for {:?}", cloud.points);
        assert_eq!(b1, alive(&h1, eps), "b1 at {eps} for {:?}", cloud.points);
    }
    scales.len()
}

/// Random clouds of at most 8 points; every third one lies on a small integer
/// grid, which produces many tied distances. Returns the number checked.
pub fn random_clouds(trials: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let n = rng.random_range(1..=8);
        let points = (0..n)
            .map(|_| {
                if trial % 3 == 0 {
                    [rng.random_range(0..4) as f64, rng.random_range(0..4) as f64]
                } else {
                    [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]
                }
            })
            .collect();
        check_cloud(points);
    }
    trials
}

/// The dim-1 pair of the square of side 2.
pub fn square_loop() -> Vec<(f64, f64)> {
    let cloud = PointCloud::new(vec![[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]]);
    let (_, h1) = compute_persistence(&cloud).unwrap();
    h1.pairs.iter().map(|p| (p.birth, p.death)).collect()
}

/// Longest edge of a minimum spanning tree, by Prim's algorithm.
pub fn mst_longest_edge(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    let d = |i: usize, j: usize| ((points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2)).sqrt();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    best[0] = 0.0;
    let mut longest: f64 = 0.0;
    for _ in 0..n {
        let u = (0..n)
            .filter(|&i| !in_tree[i])
            .min_by(|&a, &b| best[a].total_cmp(&best[b]))
            .unwrap();
        in_tree[u] = true;
        longest = longest.max(best[u]);
        for v in 0..n {
            if !in_tree[v] {
                best[v] = best[v].min(d(u, v));
            }
        }
    }
    longest
}
