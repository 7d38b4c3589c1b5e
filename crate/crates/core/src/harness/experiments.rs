use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    csv, mean, opt, Environment, ExperimentKind, ExperimentReport, ExperimentResult, ExperimentSpec, FeatureBank,
};
use crate::classifier::{evaluate, train, EvalReport, MlpModel};
use crate::error::{Error, Result};
use crate::persistence_image::FeatureSet;
use crate::wafer_sim::{
    derive_seed, draw_imbalanced_counts, generate_dataset, DatasetSpec, Label, Split, SplitSizes, NUM_CLASSES,
};

/// Training accuracy the convergence speed is measured against.
pub const CONVERGENCE_ACCURACY: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicRun {
    pub seed: u64,
    pub accuracy: f64,
    /// First epoch with training accuracy of at least 90%.
    pub epochs_to_90: Option<usize>,
    pub mean_epoch_seconds: f64,
    pub train_seconds: f64,
    /// Test-set inference time per wafer, features given.
    pub prediction_ms_per_wafer: f64,
    /// Test metrics plus the training curves and configuration.
    pub eval: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicResult {
    pub runs: Vec<BasicRun>,
}

impl BasicResult {
    pub fn tables(&self) -> Vec<(String, String)> {
        let mut out = vec![(
            "basic_runs".to_string(),
            csv(
                "seed,accuracy,epochs_to_90,mean_epoch_seconds,train_seconds,prediction_ms_per_wafer",
                self.runs.iter().map(|r| {
                    format!(
                        "{},{},{},{},{},{}",
                        r.seed,
                        r.accuracy,
                        opt(r.epochs_to_90),
                        r.mean_epoch_seconds,
                        r.train_seconds,
                        r.prediction_ms_per_wafer
                    )
                }),
            ),
        )];
        for r in &self.runs {
            if let Some(h) = &r.eval.history {
                out.push((
                    format!("basic_curves_seed{}", r.seed),
                    csv(
                        "epoch,train_loss,train_accuracy,val_loss,val_accuracy,seconds",
                        h.epochs.iter().map(|e| {
                            format!(
                                "{},{},{},{},{},{}",
                                e.epoch,
                                e.train_loss,
                                e.train_accuracy,
                                opt(e.val_loss),
                                opt(e.val_accuracy),
                                e.seconds
                            )
                        }),
                    ),
                ));
            }
            out.push((format!("basic_confusion_seed{}", r.seed), confusion_csv(&r.eval)));
        }
        out
    }

    pub fn summary(&self) -> Vec<String> {
        self.runs
            .iter()
            .map(|r| {
                format!(
                    "seed {}: test accuracy {:.3}, 90% train accuracy at epoch {}, {:.3} s/epoch, {:.3} ms/wafer inference",
                    r.seed,
                    r.accuracy,
                    r.epochs_to_90.map_or("-".to_string(), |e| e.to_string()),
                    r.mean_epoch_seconds,
                    r.prediction_ms_per_wafer
                )
            })
            .collect()
    }
}

/// Confusion matrix as CSV, rows are true classes.
pub(crate) fn confusion_csv(report: &EvalReport) -> String {
    let header = std::iter::once("true\\predicted".to_string())
        .chain(Label::ALL.iter().map(|l| l.name().to_string()))
        .collect::<Vec<_>>()
        .join(",");
    csv(
        &header,
        Label::ALL.iter().map(|l| {
            std::iter::once(l.name().to_string())
                .chain(report.confusion[l.index()].iter().map(|c| c.to_string()))
                .collect::<Vec<_>>()
                .join(",")
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAccuracy {
    pub seed: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeResult {
    /// Training wafers per class.
    pub size: usize,
    pub runs: Vec<SeedAccuracy>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallDataResult {
    pub test_seed: u64,
    pub test_per_class: usize,
    pub sizes: Vec<SizeResult>,
}

impl SmallDataResult {
    pub fn tables(&self) -> Vec<(String, String)> {
        vec![(
            "small_data".to_string(),
            csv(
                "size,seed,accuracy",
                self.sizes.iter().flat_map(|s| {
                    s.runs
                        .iter()
                        .map(move |r| format!("{},{},{}", s.size, r.seed, r.accuracy))
                        .chain(std::iter::once(format!("{},mean,{}", s.size, s.mean_accuracy)))
                }),
            ),
        )]
    }

    pub fn summary(&self) -> Vec<String> {
        self.sizes
            .iter()
            .map(|s| format!("{:>4} per class: mean accuracy {:.3}", s.size, s.mean_accuracy))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawResult {
    /// `Dataset 1..n` for the random draws, `Anchor 1..m` for fixed counts.
    pub name: String,
    pub anchored: bool,
    pub counts: [usize; NUM_CLASSES],
    pub runs: Vec<SeedAccuracy>,
    pub mean_accuracy: f64,
}

impl DrawResult {
    /// Every class has at least `n` training wafers.
    pub fn all_at_least(&self, n: usize) -> bool {
        self.counts.iter().all(|&c| c >= n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalancedResult {
    pub draw_seed: u64,
    pub test_seed: u64,
    pub test_per_class: usize,
    pub draws: Vec<DrawResult>,
    /// Mean over the random draws only.
    pub mean_accuracy: f64,
}

impl ImbalancedResult {
    pub fn tables(&self) -> Vec<(String, String)> {
        let header = std::iter::once("dataset".to_string())
            .chain(Label::ALL.iter().map(|l| l.name().to_string()))
            .chain(["anchored".to_string(), "seed".to_string(), "accuracy".to_string()])
            .collect::<Vec<_>>()
            .join(",");
        vec![(
            "imbalanced".to_string(),
            csv(
                &header,
                self.draws.iter().flat_map(|d| {
                    let counts = d.counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
                    let prefix = format!("{},{counts},{}", d.name, d.anchored);
                    d.runs
                        .iter()
                        .map(|r| format!("{prefix},{},{}", r.seed, r.accuracy))
                        .chain(std::iter::once(format!("{prefix},mean,{}", d.mean_accuracy)))
                        .collect::<Vec<_>>()
                }),
            ),
        )]
    }

    pub fn summary(&self) -> Vec<String> {
        let mut lines: Vec<String> = self
            .draws
            .iter()
            .map(|d| format!("{:<10} {:?}: mean accuracy {:.3}", d.name, d.counts, d.mean_accuracy))
            .collect();
        lines.push(format!("mean over random draws: {:.3}", self.mean_accuracy));
        lines
    }
}

fn report(spec: &ExperimentSpec, start: Instant, result: ExperimentResult) -> ExperimentReport {
    ExperimentReport {
        spec: spec.clone(),
        environment: Environment::detect(),
        result,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn expect_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::InvalidParameter(format!(
            "expected a {kind} experiment, got {}",
            spec.kind
        )));
    }
    spec.validate()
}

/// Generates a balanced dataset per seed, trains on its training split with
/// the validation split tracked every epoch, and evaluates on its test split.
pub fn run_basic(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    run_basic_with_models(spec).map(|(r, _)| r)
}

/// [`run_basic`], also returning the trained model of every seed.
pub fn run_basic_with_models(spec: &ExperimentSpec) -> Result<(ExperimentReport, Vec<MlpModel>)> {
    expect_kind(spec, ExperimentKind::Basic)?;
    let start = Instant::now();
    let split = SplitSizes {
        train: spec.split[0],
        val: spec.split[1],
        test: spec.split[2],
    };
    let mut runs = Vec::new();
    let mut models = Vec::new();
    for &seed in &spec.seeds {
        let ds = generate_dataset(&DatasetSpec::balanced(spec.per_class, Some(split)), seed)?;
        let features = |which: Split| -> Result<FeatureSet> {
            let ids = ds
                .manifest
                .wafers
                .iter()
                .filter(|e| e.split == which)
                .map(|e| e.id.clone())
                .collect();
            FeatureSet::from_wafers(ids, &ds.split(which), spec.pi.clone(), spec.jobs)
        };
        let train_set = features(Split::Train)?;
        let val_set = if split.val > 0 {
            Some(features(Split::Val)?)
        } else {
            None
        };
        let test_set = features(Split::Test)?;

        let cfg = spec.train_config(seed);
        let t = Instant::now();
        let (model, history) = train(&train_set, val_set.as_ref(), &cfg)?;
        let train_seconds = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let mut eval = evaluate(&model, &test_set)?;
        let prediction_ms_per_wafer = 1e3 * t.elapsed().as_secs_f64() / test_set.len() as f64;
        runs.push(BasicRun {
            seed,
            accuracy: eval.accuracy,
            epochs_to_90: history.epochs_to_train_accuracy(CONVERGENCE_ACCURACY),
            mean_epoch_seconds: history.mean_epoch_seconds(),
            train_seconds,
            prediction_ms_per_wafer,
            eval: {
                eval.history = Some(history);
                eval.config = Some(cfg);
                eval
            },
        });
        models.push(model);
    }
    Ok((
        report(spec, start, ExperimentResult::Basic(BasicResult { runs })),
        models,
    ))
}

fn test_set(spec: &ExperimentSpec) -> Result<FeatureSet> {
    FeatureBank::new(spec.test_seed, spec.pi.clone(), spec.jobs).feature_set(&[spec.test_per_class; NUM_CLASSES])
}

fn train_and_score(train_set: &FeatureSet, test: &FeatureSet, spec: &ExperimentSpec, seed: u64) -> Result<f64> {
    let (model, _) = train(train_set, None, &spec.train_config(seed))?;
    Ok(evaluate(&model, test)?.accuracy)
}

/// One model per (seed, training size), all scored on one shared test set.
pub fn run_small_data(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    expect_kind(spec, ExperimentKind::SmallData)?;
    let start = Instant::now();
    let test = test_set(spec)?;
    let mut sizes: Vec<SizeResult> = spec
        .sizes
        .iter()
        .map(|&size| SizeResult {
            size,
            runs: Vec::new(),
            mean_accuracy: f64::NAN,
        })
        .collect();
    for &seed in &spec.seeds {
        let mut bank = FeatureBank::new(seed, spec.pi.clone(), spec.jobs);
        for s in &mut sizes {
            let train_set = bank.feature_set(&[s.size; NUM_CLASSES])?;
            let accuracy = train_and_score(&train_set, &test, spec, seed)?;
            s.runs.push(SeedAccuracy { seed, accuracy });
        }
    }
    for s in &mut sizes {
        s.mean_accuracy = mean(s.runs.iter().map(|r| r.accuracy));
    }
    let result = SmallDataResult {
        test_seed: spec.test_seed,
        test_per_class: spec.test_per_class,
        sizes,
    };
    Ok(report(spec, start, ExperimentResult::SmallData(result)))
}

/// Per-class counts of random draw `i` of an imbalanced experiment.
pub fn imbalanced_counts(draw_seed: u64, i: usize) -> [usize; NUM_CLASSES] {
    draw_imbalanced_counts(derive_seed(&[draw_seed, i as u64]))
}

/// Trains on class-imbalanced datasets: `draws` random count vectors plus
/// the fixed anchors, one model per (seed, counts), all scored on one shared
/// balanced test set.
pub fn run_imbalanced(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    expect_kind(spec, ExperimentKind::Imbalanced)?;
    let start = Instant::now();
    let test = test_set(spec)?;
    let mut draws: Vec<DrawResult> = (0..spec.draws)
        .map(|i| {
            (
                format!("Dataset {}", i + 1),
                false,
                imbalanced_counts(spec.draw_seed, i),
            )
        })
        .chain(
            spec.anchors
                .iter()
                .enumerate()
                .map(|(i, &c)| (format!("Anchor {}", i + 1), true, c)),
        )
        .map(|(name, anchored, counts)| DrawResult {
            name,
            anchored,
            counts,
            runs: Vec::new(),
            mean_accuracy: f64::NAN,
        })
        .collect();
    for &seed in &spec.seeds {
        let mut bank = FeatureBank::new(seed, spec.pi.clone(), spec.jobs);
        for d in &mut draws {
            let train_set = bank.feature_set(&d.counts)?;
            let accuracy = train_and_score(&train_set, &test, spec, seed)?;
            d.runs.push(SeedAccuracy { seed, accuracy });
        }
    }
    for d in &mut draws {
        d.mean_accuracy = mean(d.runs.iter().map(|r| r.accuracy));
    }
    let mean_accuracy = mean(draws.iter().filter(|d| !d.anchored).map(|d| d.mean_accuracy));
    let result = ImbalancedResult {
        draw_seed: spec.draw_seed,
        test_seed: spec.test_seed,
        test_per_class: spec.test_per_class,
        draws,
        mean_accuracy,
    };
    Ok(report(spec, start, ExperimentResult::Imbalanced(result)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kind: ExperimentKind) -> ExperimentSpec {
        let mut s = ExperimentSpec::new(kind);
        s.seeds = vec![3];
        s.train.epochs = 3;
        s.train.hidden = 16;
        s.jobs = 1;
        s.per_class = 6;
        s.split = [4, 1, 1];
        s.sizes = vec![2, 3];
        s.test_per_class = 2;
        s.draws = 2;
        s.anchors = vec![[3, 1, 2, 1, 1]];
        s
    }

    #[test]
    fn basic_records_curves_and_confusion() {
        let r = run_basic(&tiny(ExperimentKind::Basic)).unwrap();
        let ExperimentResult::Basic(b) = &r.result else {
            panic!()
        };
        assert_eq!(b.runs.len(), 1);
        let run = &b.runs[0];
        assert_eq!(run.eval.total, 5);
        assert_eq!(run.eval.history.as_ref().unwrap().epochs.len(), 3);
        assert!(run.eval.history.as_ref().unwrap().epochs[0].val_accuracy.is_some());
        let names: Vec<String> = r.tables().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["basic_runs", "basic_curves_seed3", "basic_confusion_seed3"]);
    }

    #[test]
    fn small_data_is_replayable() {
        let spec = tiny(ExperimentKind::SmallData);
        let a = run_small_data(&spec).unwrap();
        let b = run_small_data(&spec).unwrap();
        assert_eq!(a.result, b.result);
        let ExperimentResult::SmallData(r) = &a.result else {
            panic!()
        };
        assert_eq!(r.sizes.iter().map(|s| s.size).collect::<Vec<_>>(), [2, 3]);
        assert!(r
            .sizes
            .iter()
            .all(|s| s.runs.len() == 1 && (0.0..=1.0).contains(&s.mean_accuracy)));
    }

    #[test]
    fn imbalanced_keeps_anchors_out_of_the_mean() {
        let r = run_imbalanced(&tiny(ExperimentKind::Imbalanced)).unwrap();
        let ExperimentResult::Imbalanced(r) = &r.result else {
            panic!()
        };
        assert_eq!(r.draws.len(), 3);
        assert!(r.draws[2].anchored);
        assert_eq!(r.draws[2].counts, [3, 1, 2, 1, 1]);
        let expected = (r.draws[0].mean_accuracy + r.draws[1].mean_accuracy) / 2.0;
        assert!((r.mean_accuracy - expected).abs() < 1e-12);
        for d in &r.draws[..2] {
            assert!(d.counts.iter().all(|&c| (1..=300).contains(&c)));
        }
    }

    #[test]
    fn wrong_kind_is_rejected() {
        assert!(run_basic(&tiny(ExperimentKind::Bench)).is_err());
    }

    #[test]
    fn draws_differ_and_are_stable() {
        assert_eq!(imbalanced_counts(1, 0), imbalanced_counts(1, 0));
        assert_ne!(imbalanced_counts(1, 0), imbalanced_counts(1, 1));
    }
}
