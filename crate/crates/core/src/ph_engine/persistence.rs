//! Zero- and one-dimensional persistence of Vietoris–Rips filtrations.
//!
//! Dimension 0 is a Kruskal sweep with union–find. Dimension 1 is computed by
//! reducing the coboundary matrix of the edges (columns taken youngest edge
//! first), which yields the same barcode as the boundary-matrix reduction.
//! Edges that kill a component are cleared without being reduced, columns
//! whose pivot forms an apparent pair are paired without any column
//! additions, and the filtration is cut at the enclosing radius, past which
//! the complex is a cone.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::distance::{compute_distance_matrix, DistanceMatrix, PointCloud};
use crate::error::{Error, Result};

/// One `(birth, death)` point of a diagram. Serializes as `[birth, death]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct PersistencePair {
    pub birth: f64,
    pub death: f64,
}

impl PersistencePair {
    pub fn new(birth: f64, death: f64) -> Self {
        Self { birth, death }
    }

    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }

    pub fn is_finite(&self) -> bool {
        self.birth.is_finite() && self.death.is_finite()
    }
}

impl From<[f64; 2]> for PersistencePair {
    fn from([birth, death]: [f64; 2]) -> Self {
        Self { birth, death }
    }
}

impl From<PersistencePair> for [f64; 2] {
    fn from(p: PersistencePair) -> Self {
        [p.birth, p.death]
    }
}

/// Multiset of persistence pairs in a single homology dimension.
///
/// JSON form: `{"dim": k, "pairs": [[b, d], ...]}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    pub dim: usize,
    pub pairs: Vec<PersistencePair>,
}

impl PersistenceDiagram {
    pub fn new(dim: usize, pairs: Vec<PersistencePair>) -> Self {
        Self { dim, pairs }
    }

    /// Builds a diagram from `(birth, death)` tuples.
    pub fn from_pairs(dim: usize, pairs: &[(f64, f64)]) -> Self {
        Self::new(dim, pairs.iter().map(|&(b, d)| PersistencePair::new(b, d)).collect())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks `death > birth` for every pair and that no value is NaN.
    pub fn validate(&self) -> Result<()> {
        for p in &self.pairs {
            if p.birth.is_nan() || p.death.is_nan() || p.death <= p.birth {
                return Err(Error::InvalidDiagram(format!(
                    "pair ({}, {}) in dim {} does not satisfy death > birth",
                    p.birth, p.death, self.dim
                )));
            }
        }
        Ok(())
    }

    /// Largest `death - birth`, or 0 for an empty diagram.
    pub fn max_persistence(&self) -> f64 {
        self.pairs.iter().map(|p| p.persistence()).fold(0.0, f64::max)
    }

    /// Pairs sorted by `(birth, death)`, the canonical multiset order.
    pub fn sorted(mut self) -> Self {
        self.pairs
            .sort_by(|a, b| a.birth.total_cmp(&b.birth).then(a.death.total_cmp(&b.death)));
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PersistenceOptions {
    /// Largest scale admitted into the filtration. `None` means the full
    /// filtration up to the maximum pairwise distance. A cap below the
    /// enclosing radius can leave classes that never die; those are dropped
    /// along with the essential component.
    pub max_scale: Option<f64>,
}

/// Dimension-0 and dimension-1 diagrams of the Rips filtration of `cloud`.
///
/// The essential component and all zero-persistence pairs are discarded.
pub fn compute_persistence(cloud: &PointCloud) -> Result<(PersistenceDiagram, PersistenceDiagram)> {
    compute_persistence_with(cloud, &PersistenceOptions::default())
}

pub fn compute_persistence_with(
    cloud: &PointCloud,
    opts: &PersistenceOptions,
) -> Result<(PersistenceDiagram, PersistenceDiagram)> {
    let dm = compute_distance_matrix(cloud)?;
    persistence_from_distances(&dm, opts)
}

pub fn persistence_from_distances(
    dm: &DistanceMatrix,
    opts: &PersistenceOptions,
) -> Result<(PersistenceDiagram, PersistenceDiagram)> {
    if dm.is_empty() {
        return Err(Error::InvalidInput("point cloud is empty".into()));
    }
    if dm.len() > MAX_POINTS {
        return Err(Error::InvalidInput(format!(
            "{} points exceeds the supported maximum of {MAX_POINTS}",
            dm.len()
        )));
    }
    let cap = match opts.max_scale {
        Some(s) if s.is_nan() || s <= 0.0 => {
            return Err(Error::InvalidParameter(format!("max_scale must be positive, got {s}")))
        }
        Some(s) => s.min(dm.max_distance()),
        None => dm.max_distance(),
    };
    let threshold = cap.min(dm.enclosing_radius());

    let edges = EdgeIndex::new(dm, threshold);
    let (dgm0, killers) = zero_dim(dm.len(), &edges);
    let dgm1 = one_dim(&edges, &killers);
    Ok((dgm0.sorted(), dgm1.sorted()))
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    diam: f64,
    u: u32,
    v: u32,
}

/// Edges below the threshold, sorted by `(diameter, u, v)`, plus the reverse
/// lookup from vertex pair to rank.
struct EdgeIndex {
    n: usize,
    sorted: Vec<Edge>,
    rank: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

impl EdgeIndex {
    fn new(dm: &DistanceMatrix, threshold: f64) -> Self {
        let n = dm.len();
        let mut sorted = Vec::new();
        for u in 0..n {
            let row = dm.row(u);
            for (v, &d) in row.iter().enumerate().skip(u + 1) {
                if d <= threshold {
                    sorted.push(Edge {
                        diam: d,
                        u: u as u32,
                        v: v as u32,
                    });
                }
            }
        }
        sorted.sort_by(|a, b| a.diam.total_cmp(&b.diam).then(a.u.cmp(&b.u)).then(a.v.cmp(&b.v)));
        let mut rank = vec![ABSENT; n * n];
        for (r, e) in sorted.iter().enumerate() {
            let (u, v) = (e.u as usize, e.v as usize);
            rank[u * n + v] = r as u32;
            rank[v * n + u] = r as u32;
        }
        Self { n, sorted, rank }
    }
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        true
    }
}

/// Kruskal sweep. Returns the finite dim-0 pairs and, per edge rank, whether
/// the edge merged two components (such edges never create a 1-cycle).
fn zero_dim(n: usize, edges: &EdgeIndex) -> (PersistenceDiagram, Vec<bool>) {
    let mut uf = UnionFind::new(n);
    let mut killers = vec![false; edges.sorted.len()];
    let mut pairs = Vec::with_capacity(n.saturating_sub(1));
    let mut merges = 0;
    for (r, e) in edges.sorted.iter().enumerate() {
        if uf.union(e.u, e.v) {
            killers[r] = true;
            merges += 1;
            if e.diam > 0.0 {
                pairs.push(PersistencePair::new(0.0, e.diam));
            }
            if merges + 1 == n {
                break;
            }
        }
    }
    (PersistenceDiagram::new(0, pairs), killers)
}

/// Triangles are keyed by `(rank of longest edge) << 32 | lex code`. Ordering
/// by this key refines the diameter order and puts every triangle after its
/// edges, so it is a valid filtration order.
type TriangleKey = u64;

/// Largest cloud whose lexicographic triangle codes fit in 32 bits.
pub const MAX_POINTS: usize = 1624;

struct Coboundary<'a> {
    edges: &'a EdgeIndex,
}

impl Coboundary<'_> {
    #[inline]
    fn key(&self, top_rank: u32, a: usize, b: usize, c: usize) -> TriangleKey {
        let (a, b, c) = sort3(a, b, c);
        let n = self.edges.n;
        ((top_rank as u64) << 32) | ((a * n + b) * n + c) as u64
    }

    #[inline]
    fn diameter(&self, key: TriangleKey) -> f64 {
        self.edges.sorted[(key >> 32) as usize].diam
    }

    #[inline]
    fn rank_row(&self, u: usize) -> &[u32] {
        &self.edges.rank[u * self.edges.n..(u + 1) * self.edges.n]
    }

    /// Calls `f` for every triangle containing edge `rank` within the
    /// threshold whose key is at least `floor`.
    #[inline]
    fn for_each(&self, rank: u32, floor: TriangleKey, mut f: impl FnMut(TriangleKey)) {
        let e = self.edges.sorted[rank as usize];
        let (u, v) = (e.u as usize, e.v as usize);
        let floor_rank = (floor >> 32) as u32;
        for (w, (&ru, &rv)) in self.rank_row(u).iter().zip(self.rank_row(v)).enumerate() {
            // absent edges (including u-u and v-v) carry rank ABSENT
            let top = ru.max(rv).max(rank);
            if top != ABSENT && top >= floor_rank {
                let key = self.key(top, u, v, w);
                if key >= floor {
                    f(key);
                }
            }
        }
    }

    /// Oldest triangle containing edge `rank`, if any.
    ///
    /// Lex codes increase with the third vertex, so among triangles whose
    /// longest edge is `rank` itself the first one found is the oldest.
    #[inline]
    fn oldest(&self, rank: u32) -> Option<TriangleKey> {
        let e = self.edges.sorted[rank as usize];
        let (u, v) = (e.u as usize, e.v as usize);
        let mut best = ABSENT;
        let mut best_w = 0;
        for (w, (&ru, &rv)) in self.rank_row(u).iter().zip(self.rank_row(v)).enumerate() {
            let top = ru.max(rv);
            if top < rank {
                return Some(self.key(rank, u, v, w));
            }
            if top < best {
                best = top;
                best_w = w;
            }
        }
        (best != ABSENT).then(|| self.key(best, u, v, best_w))
    }
}

#[inline]
fn sort3(a: usize, b: usize, c: usize) -> (usize, usize, usize) {
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    if c < a {
        (c, a, b)
    } else if c < b {
        (a, c, b)
    } else {
        (a, b, c)
    }
}

/// Current pivot (oldest triangle with odd multiplicity), left in the heap.
fn pivot(heap: &mut BinaryHeap<Reverse<TriangleKey>>) -> Option<TriangleKey> {
    while let Some(Reverse(top)) = heap.pop() {
        if heap.peek() == Some(&Reverse(top)) {
            heap.pop();
            continue;
        }
        heap.push(Reverse(top));
        return Some(top);
    }
    None
}

fn one_dim(edges: &EdgeIndex, killers: &[bool]) -> PersistenceDiagram {
    let cob = Coboundary { edges };
    // pivot triangle -> edge whose reduced column owns it
    let mut pivot_of: HashMap<TriangleKey, u32> = HashMap::new();
    // column combinations for non-trivially reduced columns; others are {edge}
    let mut combos: HashMap<u32, Vec<u32>> = HashMap::new();
    let mut pairs = Vec::new();
    let mut heap = BinaryHeap::new();

    for rank in (0..edges.sorted.len() as u32).rev() {
        if killers[rank as usize] {
            continue;
        }
        let birth = edges.sorted[rank as usize].diam;
        let Some(first) = cob.oldest(rank) else {
            // no cofacets below the threshold: never dies
            continue;
        };

        let death = if let std::collections::hash_map::Entry::Vacant(slot) = pivot_of.entry(first) {
            // The unreduced column already has an unclaimed pivot.
            slot.insert(rank);
            Some(first)
        } else {
            heap.clear();
            cob.for_each(rank, first, |t| heap.push(Reverse(t)));
            let mut combo = vec![rank];
            loop {
                let Some(t) = pivot(&mut heap) else {
                    break None;
                };
                match pivot_of.get(&t) {
                    Some(&other) => {
                        let single = [other];
                        let added: &[u32] = combos.get(&other).map_or(&single, |v| v.as_slice());
                        // Entries older than the pivot t are paired off in
                        // both summands and can never become a pivot again.
                        for &col in added {
                            cob.for_each(col, t, |k| heap.push(Reverse(k)));
                        }
                        combo.extend_from_slice(added);
                    }
                    None => {
                        pivot_of.insert(t, rank);
                        if combo.len() > 1 {
                            combos.insert(rank, reduce_mod2(combo));
                        }
                        break Some(t);
                    }
                }
            }
        };
        if let Some(t) = death {
            let d = cob.diameter(t);
            if d > birth {
                pairs.push(PersistencePair::new(birth, d));
            }
        }
    }
    PersistenceDiagram::new(1, pairs)
}

fn reduce_mod2(mut cols: Vec<u32>) -> Vec<u32> {
    cols.sort_unstable();
    let mut out = Vec::with_capacity(cols.len());
    let mut i = 0;
    while i < cols.len() {
        let mut j = i;
        while j < cols.len() && cols[j] == cols[i] {
            j += 1;
        }
        if (j - i) % 2 == 1 {
            out.push(cols[i]);
        }
        i = j;
    }
    out
}
