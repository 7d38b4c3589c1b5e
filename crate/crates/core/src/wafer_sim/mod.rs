//! Synthetic wafer defect maps for five pattern classes.
//!
//! Every wafer is generated from its own seed, derived from the dataset seed,
//! its class and its index within the class, so datasets can be produced in
//! any order or in parallel with identical results.

mod dataset;
mod patterns;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{
    derive_seed, draw_imbalanced_counts, generate_dataset, load_dataset, wafer_seed, write_dataset, Dataset,
    DatasetManifest, DatasetSpec, Split, SplitSizes, WaferEntry,
};
pub use patterns::{
    gen_cluster, gen_dense, gen_random, gen_ring, gen_scratch, scratch_curve, BlobMeta, PatternMeta, WaferMap,
    WaferRng, CLUSTER_CENTER_RADIUS,
};

/// Wafer maps live on the closed disk of this radius centred at the origin.
pub const WAFER_RADIUS: f64 = 10.0;

pub const NUM_CLASSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Random,
    Ring,
    Scratch,
    Dense,
    Cluster,
}

impl Label {
    pub const ALL: [Label; NUM_CLASSES] = [Label::Random, Label::Ring, Label::Scratch, Label::Dense, Label::Cluster];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or(Error::Label(i))
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Random => "Random",
            Label::Ring => "Ring",
            Label::Scratch => "Scratch",
            Label::Dense => "Dense",
            Label::Cluster => "Cluster",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Format(format!("unknown label {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_round_trips() {
        for (i, l) in Label::ALL.into_iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(Label::from_index(i).unwrap(), l);
            assert_eq!(l.name().parse::<Label>().unwrap(), l);
            assert_eq!(l.name().to_lowercase().parse::<Label>().unwrap(), l);
        }
        assert!(matches!(Label::from_index(5), Err(Error::Label(5))));
        assert!("donut".parse::<Label>().is_err());
    }
}
