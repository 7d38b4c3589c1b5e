//! Vietoris–Rips filtrations of planar point sets and their persistence
//! diagrams in dimensions 0 and 1.

mod betti;
mod distance;
mod filtration;
mod persistence;

pub use betti::oracle_betti;
pub use distance::{compute_distance_matrix, DistanceMatrix, Point, PointCloud};
pub use filtration::{build_rips_filtration, FiltrationSimplex};
pub use persistence::{
    compute_persistence, compute_persistence_with, persistence_from_distances, PersistenceDiagram, PersistenceOptions,
    PersistencePair,
};
