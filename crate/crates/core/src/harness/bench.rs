use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{csv, median, Environment, ExperimentKind, ExperimentReport, ExperimentResult, ExperimentSpec};
use crate::classifier::{init_model, predict, MlpModel, ModelDims};
use crate::error::{Error, Result};
use crate::persistence_image::featurize_all;
use crate::wafer_sim::{generate_dataset, DatasetSpec, Label, WaferMap, NUM_CLASSES};

/// Wall-clock seconds of one end-to-end pass over a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchTiming {
    pub featurize_seconds: f64,
    pub inference_seconds: f64,
    /// Measured around both stages, independently of the stage timers.
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfigResult {
    pub ratio: f64,
    pub total: usize,
    pub counts: [usize; NUM_CLASSES],
    pub repetitions: Vec<BenchTiming>,
    /// The repetition with the median total time.
    pub median: BenchTiming,
    pub ms_per_wafer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    /// Whether a trained model was timed; inference cost does not depend on
    /// the weights.
    pub trained_model: bool,
    pub configs: Vec<BenchConfigResult>,
}

impl BenchResult {
    pub fn tables(&self) -> Vec<(String, String)> {
        vec![(
            "bench".to_string(),
            csv(
                "ratio,total,featurize_seconds,inference_seconds,total_seconds,ms_per_wafer",
                self.configs.iter().map(|c| {
                    format!(
                        "{},{},{},{},{},{}",
                        c.ratio,
                        c.total,
                        c.median.featurize_seconds,
                        c.median.inference_seconds,
                        c.median.total_seconds,
                        c.ms_per_wafer
                    )
                }),
            ),
        )]
    }

    pub fn summary(&self) -> Vec<String> {
        self.configs
            .iter()
            .map(|c| {
                format!(
                    "random ratio {:.1}, {:>5} wafers: {:.3} s total ({:.3} featurize + {:.3} inference), {:.3} ms/wafer",
                    c.ratio,
                    c.total,
                    c.median.total_seconds,
                    c.median.featurize_seconds,
                    c.median.inference_seconds,
                    c.ms_per_wafer
                )
            })
            .collect()
    }

    /// Median total time of a configuration.
    pub fn seconds(&self, ratio: f64, total: usize) -> Option<f64> {
        self.configs
            .iter()
            .find(|c| c.ratio == ratio && c.total == total)
            .map(|c| c.median.total_seconds)
    }
}

/// Class counts of a dataset of `total` wafers with the given share of
/// random-pattern wafers; the rest is split evenly over the other classes,
/// earlier classes taking the remainder.
pub fn mixed_counts(ratio: f64, total: usize) -> [usize; NUM_CLASSES] {
    let random = ((ratio * total as f64).round() as usize).min(total);
    let rest = total - random;
    let others = NUM_CLASSES - 1;
    let mut counts = [0; NUM_CLASSES];
    counts[Label::Random.index()] = random;
    for (k, label) in Label::ALL.iter().filter(|&&l| l != Label::Random).enumerate() {
        counts[label.index()] = rest / others + usize::from(k < rest % others);
    }
    counts
}

fn time_pass(wafers: &[&WaferMap], model: &MlpModel, spec: &ExperimentSpec) -> Result<BenchTiming> {
    let start = Instant::now();
    let features = featurize_all(wafers, &spec.pi, spec.jobs)?;
    let mid = Instant::now();
    let rows: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
    let predictions = predict(model, &rows)?;
    let end = Instant::now();
    std::hint::black_box(predictions);
    Ok(BenchTiming {
        featurize_seconds: (mid - start).as_secs_f64(),
        inference_seconds: (end - mid).as_secs_f64(),
        total_seconds: (end - start).as_secs_f64(),
    })
}

/// Times raw wafer maps to predicted labels for every (ratio, total) pair,
/// reporting the median of `repetitions` runs. Without a model a freshly
/// initialized one of the default shape is used.
pub fn run_bench(spec: &ExperimentSpec, model: Option<&MlpModel>) -> Result<ExperimentReport> {
    if spec.kind != ExperimentKind::Bench {
        return Err(Error::InvalidParameter(format!(
            "expected a bench experiment, got {}",
            spec.kind
        )));
    }
    spec.validate()?;
    let start = Instant::now();
    let seed = spec.seeds[0];
    let trained_model = model.is_some();
    let fresh;
    let model = match model {
        Some(m) => m,
        None => {
            fresh = init_model(
                ModelDims {
                    input: spec.pi.feature_len(),
                    hidden: spec.train.hidden,
                    classes: NUM_CLASSES,
                },
                seed,
            );
            &fresh
        }
    };
    let mut configs = Vec::new();
    let mut warmed = false;
    for &total in &spec.totals {
        for &ratio in &spec.ratios {
            let counts = mixed_counts(ratio, total);
            let ds = generate_dataset(&DatasetSpec { counts, split: None }, seed)?;
            let wafers: Vec<&WaferMap> = ds.wafers.iter().collect();
            if !warmed {
                time_pass(&wafers[..wafers.len().min(20)], model, spec)?;
                warmed = true;
            }
            let repetitions = (0..spec.repetitions)
                .map(|_| time_pass(&wafers, model, spec))
                .collect::<Result<Vec<_>>>()?;
            let mut totals: Vec<f64> = repetitions.iter().map(|r| r.total_seconds).collect();
            let mid = median(&mut totals);
            let median = *repetitions
                .iter()
                .min_by(|a, b| (a.total_seconds - mid).abs().total_cmp(&(b.total_seconds - mid).abs()))
                .unwrap();
            configs.push(BenchConfigResult {
                ratio,
                total,
                counts,
                repetitions,
                median,
                ms_per_wafer: 1e3 * median.total_seconds / total as f64,
            });
        }
    }
    let result = BenchResult { trained_model, configs };
    Ok(ExperimentReport {
        spec: spec.clone(),
        environment: Environment::detect(),
        result: ExperimentResult::Bench(result),
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_counts_split_the_rest_evenly() {
        assert_eq!(mixed_counts(0.7, 500), [350, 38, 38, 37, 37]);
        assert_eq!(mixed_counts(0.9, 1000), [900, 25, 25, 25, 25]);
        assert_eq!(mixed_counts(1.0, 7), [7, 0, 0, 0, 0]);
        for (r, t) in [(0.8, 500), (0.7, 1000), (0.33, 11)] {
            assert_eq!(mixed_counts(r, t).iter().sum::<usize>(), t);
        }
    }

    #[test]
    fn stages_add_up_to_the_total() {
        let mut spec = ExperimentSpec::new(ExperimentKind::Bench);
        spec.ratios = vec![0.5];
        spec.totals = vec![10];
        spec.repetitions = 3;
        spec.jobs = 1;
        let r = run_bench(&spec, None).unwrap();
        let ExperimentResult::Bench(b) = &r.result else {
            panic!()
        };
        assert!(!b.trained_model);
        assert_eq!(b.configs.len(), 1);
        let c = &b.configs[0];
        assert_eq!(c.repetitions.len(), 3);
        for t in &c.repetitions {
            let stages = t.featurize_seconds + t.inference_seconds;
            assert!((stages - t.total_seconds).abs() <= 0.05 * t.total_seconds);
        }
    }
}
