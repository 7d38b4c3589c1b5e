//! End-to-end experiments: the basic train/evaluate run, the prediction-time
//! benchmark, and the small-data and imbalanced-data studies.
//!
//! Every accuracy in a report is reproducible from the stored spec alone;
//! only timings vary between runs.

mod bench;
mod experiments;
pub mod plot;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::TrainConfig;
use crate::error::{Error, Result};
use crate::persistence_image::{featurize_all, FeatureSet, PIConfig};
use crate::wafer_sim::{wafer_seed, Label, WaferMap, NUM_CLASSES};

pub use bench::{mixed_counts, run_bench, BenchConfigResult, BenchResult, BenchTiming};
pub use experiments::{
    imbalanced_counts, run_basic, run_basic_with_models, run_imbalanced, run_small_data, BasicResult, BasicRun,
    DrawResult, ImbalancedResult, SeedAccuracy, SizeResult, SmallDataResult, CONVERGENCE_ACCURACY,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Basic,
    SmallData,
    Imbalanced,
    Bench,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Basic => "basic",
            ExperimentKind::SmallData => "small-data",
            ExperimentKind::Imbalanced => "imbalanced",
            ExperimentKind::Bench => "bench",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "basic" => Ok(ExperimentKind::Basic),
            "small-data" => Ok(ExperimentKind::SmallData),
            "imbalanced" => Ok(ExperimentKind::Imbalanced),
            "bench" => Ok(ExperimentKind::Bench),
            _ => Err(Error::Format(format!("unknown experiment kind {s:?}"))),
        }
    }
}

/// Parameters of one experiment. Fields that do not apply to `kind` are
/// ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// One training run per seed. The seed drives both the training data and
    /// the model (initialization and shuffling).
    pub seeds: Vec<u64>,
    /// Training hyperparameters; `seed` is replaced per run.
    pub train: TrainConfig,
    pub pi: PIConfig,
    /// Featurization worker threads.
    pub jobs: usize,
    /// Basic: wafers per class and their train/validation/test split.
    pub per_class: usize,
    pub split: [usize; 3],
    /// Small-data: training wafers per class, one model per entry.
    pub sizes: Vec<usize>,
    /// Small-data and imbalanced: a shared test set of this many wafers per
    /// class, generated once from `test_seed`.
    pub test_per_class: usize,
    pub test_seed: u64,
    /// Imbalanced: number of i.i.d. count draws and the seed they come from.
    pub draws: usize,
    pub draw_seed: u64,
    /// Imbalanced: fixed count vectors evaluated next to the random draws.
    pub anchors: Vec<[usize; NUM_CLASSES]>,
    /// Bench: fraction of random-pattern wafers and dataset sizes.
    pub ratios: Vec<f64>,
    pub totals: Vec<usize>,
    pub repetitions: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self::new(ExperimentKind::Basic)
    }
}

/// Counts above this are outside the imbalanced-draw range.
pub const MAX_DRAW_COUNT: usize = 300;

impl ExperimentSpec {
    /// Full-size defaults for `kind`.
    pub fn new(kind: ExperimentKind) -> Self {
        let seeds = match kind {
            ExperimentKind::Basic => vec![0, 1, 2],
            ExperimentKind::SmallData | ExperimentKind::Imbalanced => vec![0, 1, 2, 3, 4],
            ExperimentKind::Bench => vec![0],
        };
        Self {
            kind,
            seeds,
            train: TrainConfig::default(),
            pi: PIConfig::default(),
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            per_class: 500,
            split: [300, 100, 100],
            sizes: (1..=10).map(|i| 10 * i).collect(),
            test_per_class: 100,
            test_seed: 1_000_000,
            draws: 10,
            draw_seed: 2_024,
            anchors: vec![[250, 200, 180, 220, 160], [5, 240, 8, 190, 270]],
            ratios: vec![0.7, 0.8, 0.9],
            totals: vec![500, 1000],
            repetitions: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        self.pi.validate()?;
        self.train.validate()?;
        match self.kind {
            ExperimentKind::Basic => {
                if self.split.iter().sum::<usize>() != self.per_class || self.split[0] == 0 || self.split[2] == 0 {
                    return bad(format!(
                        "split {:?} must add up to {} with non-empty train and test parts",
                        self.split, self.per_class
                    ));
                }
            }
            ExperimentKind::SmallData => {
                if self.sizes.is_empty() || self.sizes.contains(&0) {
                    return bad("training sizes must be non-empty and positive".into());
                }
                self.check_test_set()?;
            }
            ExperimentKind::Imbalanced => {
                if self.draws == 0 && self.anchors.is_empty() {
                    return bad("no draws and no anchors to evaluate".into());
                }
                for counts in &self.anchors {
                    if counts.iter().any(|&c| c == 0 || c > MAX_DRAW_COUNT) {
                        return bad(format!("anchor counts {counts:?} must lie in 1..={MAX_DRAW_COUNT}"));
                    }
                }
                self.check_test_set()?;
            }
            ExperimentKind::Bench => {
                if self.ratios.is_empty() || self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
                    return bad(format!("random ratios {:?} must lie in [0, 1]", self.ratios));
                }
                if self.totals.is_empty() || self.totals.contains(&0) {
                    return bad("bench totals must be non-empty and positive".into());
                }
                if self.repetitions == 0 {
                    return bad("repetitions must be at least 1".into());
                }
            }
        }
        Ok(())
    }

    fn check_test_set(&self) -> Result<()> {
        if self.test_per_class == 0 {
            return Err(Error::InvalidParameter("test set must not be empty".into()));
        }
        if self.seeds.contains(&self.test_seed) {
            return Err(Error::InvalidParameter(format!(
                "test seed {} is also a training seed",
                self.test_seed
            )));
        }
        Ok(())
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }
}

/// Where the numbers were measured.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub cpu_model: String,
    pub logical_cores: usize,
    pub os: String,
    pub arch: String,
    pub version: String,
}

impl Environment {
    pub fn detect() -> Self {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|info| {
                info.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split_once(':'))
                    .map(|(_, v)| v.trim().to_string())
            })
            .unwrap_or_else(|| "unknown".into());
        Self {
            cpu_model,
            logical_cores: std::thread::available_parallelism().map_or(1, |n| n.get()),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentResult {
    Basic(BasicResult),
    SmallData(SmallDataResult),
    Imbalanced(ImbalancedResult),
    Bench(BenchResult),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub environment: Environment,
    pub result: ExperimentResult,
    pub seconds: f64,
}

impl ExperimentReport {
    pub fn kind(&self) -> ExperimentKind {
        self.spec.kind
    }

    /// Flat tables of the report, as `(name, csv text)`.
    pub fn tables(&self) -> Vec<(String, String)> {
        match &self.result {
            ExperimentResult::Basic(r) => r.tables(),
            ExperimentResult::SmallData(r) => r.tables(),
            ExperimentResult::Imbalanced(r) => r.tables(),
            ExperimentResult::Bench(r) => r.tables(),
        }
    }

    /// Short human-readable summary.
    pub fn summary(&self) -> Vec<String> {
        let mut lines = match &self.result {
            ExperimentResult::Basic(r) => r.summary(),
            ExperimentResult::SmallData(r) => r.summary(),
            ExperimentResult::Imbalanced(r) => r.summary(),
            ExperimentResult::Bench(r) => r.summary(),
        };
        lines.push(format!(
            "{:.1}s on {} ({} cores)",
            self.seconds, self.environment.cpu_model, self.environment.logical_cores
        ));
        lines
    }
}

/// Runs the experiment described by `spec`. The bench uses an untrained
/// model; see [`run_bench`] to time a trained one.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    match spec.kind {
        ExperimentKind::Basic => run_basic(spec),
        ExperimentKind::SmallData => run_small_data(spec),
        ExperimentKind::Imbalanced => run_imbalanced(spec),
        ExperimentKind::Bench => run_bench(spec, None),
    }
}

/// Wafer id as used in dataset manifests.
pub(crate) fn wafer_id(label: Label, index: usize) -> String {
    format!("{}_{index:04}", label.name().to_lowercase())
}

/// Features of the wafers of one dataset seed, computed on demand. Wafer
/// `i` of a class depends only on the seed, class and `i`, so the first `n`
/// wafers of a class are shared by every dataset that uses at least `n`.
pub(crate) struct FeatureBank {
    seed: u64,
    config: PIConfig,
    jobs: usize,
    rows: [Vec<Vec<f64>>; NUM_CLASSES],
}

impl FeatureBank {
    pub(crate) fn new(seed: u64, config: PIConfig, jobs: usize) -> Self {
        Self {
            seed,
            config,
            jobs,
            rows: Default::default(),
        }
    }

    fn ensure(&mut self, counts: &[usize; NUM_CLASSES]) -> Result<()> {
        let mut missing = Vec::new();
        for label in Label::ALL {
            for index in self.rows[label.index()].len()..counts[label.index()] {
                missing.push(WaferMap::generate(label, wafer_seed(self.seed, label, index)));
            }
        }
        let refs: Vec<&WaferMap> = missing.iter().collect();
        let features = featurize_all(&refs, &self.config, self.jobs)?;
        for (wafer, fv) in missing.iter().zip(features) {
            self.rows[wafer.label.index()].push(fv.values);
        }
        Ok(())
    }

    /// The first `counts[c]` wafers of every class `c`, class-major.
    pub(crate) fn feature_set(&mut self, counts: &[usize; NUM_CLASSES]) -> Result<FeatureSet> {
        self.ensure(counts)?;
        let mut set = FeatureSet::new(self.config.clone(), self.config.feature_len());
        for label in Label::ALL {
            for (index, row) in self.rows[label.index()][..counts[label.index()]].iter().enumerate() {
                set.push(wafer_id(label, index), label, row)?;
            }
        }
        Ok(set)
    }
}

/// CSV text from a header line and data lines.
fn csv(header: &str, lines: impl IntoIterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for line in lines {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}
