use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Label, WaferMap, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::json_io::{read_json, write_json};

const MANIFEST: &str = "manifest.json";
const WAFER_DIR: &str = "wafers";

/// Stream tags keep per-purpose seeds apart.
const TAG_WAFER: u64 = 0x5741_4645;
const TAG_SPLIT: u64 = 0x5350_4c54;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0, |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Combines several values into one well-mixed seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    mix(parts)
}

/// Seed of wafer `index` of class `label` in a dataset generated with `seed`.
pub fn wafer_seed(seed: u64, label: Label, index: usize) -> u64 {
    mix(&[seed, TAG_WAFER, label.index() as u64, index as u64])
}

/// Per-class counts drawn i.i.d. uniformly from {1, ..., 300}.
pub fn draw_imbalanced_counts(seed: u64) -> [usize; NUM_CLASSES] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::array::from_fn(|_| rng.random_range(1..=300))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// What to generate. Without a split every wafer goes to training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub counts: [usize; NUM_CLASSES],
    /// Per-class split; must add up to the count of every non-empty class.
    pub split: Option<SplitSizes>,
}

impl DatasetSpec {
    pub fn balanced(per_class: usize, split: Option<SplitSizes>) -> Self {
        Self {
            counts: [per_class; NUM_CLASSES],
            split,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(split) = self.split {
            for (label, &count) in Label::ALL.iter().zip(&self.counts) {
                if count > 0 && split.total() != count {
                    return Err(Error::InvalidParameter(format!(
                        "split {}/{}/{} does not add up to the {count} {label} wafers",
                        split.train, split.val, split.test
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaferEntry {
    pub id: String,
    pub label: Label,
    pub index: usize,
    pub seed: u64,
    pub split: Split,
    /// Relative to the dataset directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub counts: BTreeMap<Label, usize>,
    pub split: Option<SplitSizes>,
    pub wafers: Vec<WaferEntry>,
}

impl DatasetManifest {
    pub fn split_count(&self, split: Split) -> usize {
        self.wafers.iter().filter(|w| w.split == split).count()
    }
}

/// A generated dataset; `wafers[i]` belongs to `manifest.wafers[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub wafers: Vec<WaferMap>,
}

impl Dataset {
    /// Wafers of one split, in manifest order.
    pub fn split(&self, split: Split) -> Vec<&WaferMap> {
        self.manifest
            .wafers
            .iter()
            .zip(&self.wafers)
            .filter(|(e, _)| e.split == split)
            .map(|(_, w)| w)
            .collect()
    }
}

/// Generates every wafer of `spec` in class-major order.
pub fn generate_dataset(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut entries = Vec::new();
    let mut wafers = Vec::new();
    for label in Label::ALL {
        let count = spec.counts[label.index()];
        let splits = assign_splits(count, spec.split, seed, label);
        for (index, split) in splits.into_iter().enumerate() {
            let wseed = wafer_seed(seed, label, index);
            let id = format!("{}_{index:04}", label.name().to_lowercase());
            entries.push(WaferEntry {
                path: format!("{WAFER_DIR}/{id}.json"),
                id,
                label,
                index,
                seed: wseed,
                split,
            });
            wafers.push(WaferMap::generate(label, wseed));
        }
    }
    let manifest = DatasetManifest {
        seed,
        counts: Label::ALL.iter().map(|&l| (l, spec.counts[l.index()])).collect(),
        split: spec.split,
        wafers: entries,
    };
    Ok(Dataset { manifest, wafers })
}

fn assign_splits(count: usize, split: Option<SplitSizes>, seed: u64, label: Label) -> Vec<Split> {
    let Some(sizes) = split else {
        return vec![Split::Train; count];
    };
    let mut order: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, TAG_SPLIT, label.index() as u64]));
    order.shuffle(&mut rng);
    let mut out = vec![Split::Train; count];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < sizes.train {
            Split::Train
        } else if rank < sizes.train + sizes.val {
            Split::Val
        } else {
            Split::Test
        };
    }
    out
}

/// Writes `manifest.json` and one JSON file per wafer under `dir`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    let wafer_dir = dir.join(WAFER_DIR);
    fs::create_dir_all(&wafer_dir).map_err(|e| Error::io(&wafer_dir, e))?;
    for (entry, wafer) in dataset.manifest.wafers.iter().zip(&dataset.wafers) {
        write_json(&dir.join(&entry.path), wafer)?;
    }
    write_json(&dir.join(MANIFEST), &dataset.manifest)
}

/// Reads a dataset written by [`write_dataset`], checking each wafer against
/// its manifest entry.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: DatasetManifest = read_json(&dir.join(MANIFEST))?;
    let mut wafers = Vec::with_capacity(manifest.wafers.len());
    for entry in &manifest.wafers {
        let path = dir.join(&entry.path);
        let wafer: WaferMap = read_json(&path)?;
        if wafer.label != entry.label || wafer.seed != entry.seed {
            return Err(Error::Format(format!(
                "{} does not match its manifest entry {}",
                path.display(),
                entry.id
            )));
        }
        wafers.push(wafer);
    }
    Ok(Dataset { manifest, wafers })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basic() -> DatasetSpec {
        DatasetSpec::balanced(
            500,
            Some(SplitSizes {
                train: 300,
                val: 100,
                test: 100,
            }),
        )
    }

    #[test]
    fn basic_split_sizes() {
        let ds = generate_dataset(&basic(), 7).unwrap();
        assert_eq!(ds.wafers.len(), 2500);
        assert_eq!(ds.manifest.split_count(Split::Train), 1500);
        assert_eq!(ds.manifest.split_count(Split::Val), 500);
        assert_eq!(ds.manifest.split_count(Split::Test), 500);
        for label in Label::ALL {
            let of = |s| {
                ds.manifest
                    .wafers
                    .iter()
                    .filter(|w| w.label == label && w.split == s)
                    .count()
            };
            assert_eq!((of(Split::Train), of(Split::Val), of(Split::Test)), (300, 100, 100));
        }
        let mut ids: Vec<_> = ds.manifest.wafers.iter().map(|w| &w.id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 2500);
    }

    #[test]
    fn empty_class_is_absent() {
        let spec = DatasetSpec {
            counts: [3, 0, 2, 1, 4],
            split: None,
        };
        let ds = generate_dataset(&spec, 1).unwrap();
        assert!(ds.wafers.iter().all(|w| w.label != Label::Ring));
        assert_eq!(ds.manifest.counts[&Label::Ring], 0);
        assert_eq!(ds.wafers.len(), 10);
        assert_eq!(ds.split(Split::Train).len(), 10);
    }

    #[test]
    fn split_must_add_up() {
        let spec = DatasetSpec {
            counts: [5, 0, 5, 5, 6],
            split: Some(SplitSizes {
                train: 3,
                val: 1,
                test: 1,
            }),
        };
        assert!(matches!(generate_dataset(&spec, 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn deterministic() {
        let spec = DatasetSpec::balanced(4, None);
        assert_eq!(generate_dataset(&spec, 3).unwrap(), generate_dataset(&spec, 3).unwrap());
        assert_ne!(
            generate_dataset(&spec, 3).unwrap().wafers,
            generate_dataset(&spec, 4).unwrap().wafers
        );
    }

    #[test]
    fn prefix_stable_across_counts() {
        // a wafer depends only on (seed, class, index)
        let small = generate_dataset(&DatasetSpec::balanced(3, None), 9).unwrap();
        let large = generate_dataset(&DatasetSpec::balanced(6, None), 9).unwrap();
        for w in &small.wafers {
            assert!(large.wafers.contains(w));
        }
    }

    #[test]
    fn imbalanced_counts_in_range() {
        for seed in 0..200 {
            assert!(draw_imbalanced_counts(seed).iter().all(|c| (1..=300).contains(c)));
        }
        assert_eq!(draw_imbalanced_counts(5), draw_imbalanced_counts(5));
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec {
            counts: [2, 2, 2, 2, 3],
            split: None,
        };
        let ds = generate_dataset(&spec, 11).unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn missing_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("manifest.json"), "{err}");
    }
}
