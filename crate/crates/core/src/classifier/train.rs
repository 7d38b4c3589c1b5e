use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::{accumulate, argmax, for_each_prediction, init_model, Gradients, MlpModel, ModelDims, Scaler, Workspace};
use crate::error::{Error, Result};
use crate::persistence_image::FeatureSet;
use crate::wafer_sim::NUM_CLASSES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    /// Seeds both the initial weights and the per-epoch shuffles.
    pub seed: u64,
    /// Rescale every feature to zero mean and unit variance on the training
    /// set before training.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            epochs: 700,
            batch_size: 32,
            hidden: 1024,
            seed: 0,
            standardize: false,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        for (name, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("hidden", self.hidden),
        ] {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    /// Fraction of training samples classified correctly by the model as it
    /// was when each sample's batch was processed.
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    /// Wall-clock time of the epoch, validation included.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// First epoch whose training accuracy reaches `threshold`.
    pub fn epochs_to_train_accuracy(&self, threshold: f64) -> Option<usize> {
        self.epochs
            .iter()
            .find(|e| e.train_accuracy >= threshold)
            .map(|e| e.epoch)
    }

    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.epochs.is_empty() {
            return 0.0;
        }
        self.epochs.iter().map(|e| e.seconds).sum::<f64>() / self.epochs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub loss: f64,
    /// `confusion[true][predicted]`.
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
    pub per_class_recall: [Option<f64>; NUM_CLASSES],
    pub total: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<TrainHistory>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<TrainConfig>,
}

fn check_set(set: &FeatureSet, dims: Option<ModelDims>, what: &str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::InvalidInput(format!("{what} set is empty")));
    }
    if let Some(d) = dims {
        if set.dim != d.input {
            return Err(Error::Shape {
                expected: d.input,
                actual: set.dim,
            });
        }
    }
    Ok(())
}

/// Loss, number correct and predictions of `model` on every row of `set`.
fn score(model: &MlpModel, set: &FeatureSet, ws: &mut Workspace) -> (f64, usize, Vec<usize>) {
    let rows: Vec<&[f64]> = (0..set.len()).map(|i| set.row(i)).collect();
    let labels = set.label_indices();
    let mut loss = 0.0;
    let mut correct = 0;
    let mut predictions = Vec::with_capacity(set.len());
    for_each_prediction(model, &rows, Some(&labels), ws, |i, probs, l| {
        let y = labels[i];
        loss += l;
        let p = argmax(probs);
        correct += usize::from(p == y);
        predictions.push(p);
    });
    (loss / set.len() as f64, correct, predictions)
}

/// Mini-batch Adam on shuffled training data. Validation loss and accuracy
/// are recorded after every epoch when a validation set is given.
pub fn train(train: &FeatureSet, val: Option<&FeatureSet>, cfg: &TrainConfig) -> Result<(MlpModel, TrainHistory)> {
    cfg.validate()?;
    check_set(train, None, "training")?;
    let dims = ModelDims {
        input: train.dim,
        hidden: cfg.hidden,
        classes: NUM_CLASSES,
    };
    if let Some(v) = val {
        check_set(v, Some(dims), "validation")?;
    }

    let mut model = init_model(dims, cfg.seed);
    if cfg.standardize {
        model.scaler = Some(Scaler::fit(&train.data, train.dim));
    }
    let adam = cfg.adam();
    let mut state = AdamState::new(dims);
    let mut grads = Gradients::zeros(dims);
    let mut ws = Workspace::new(dims);
    // the shuffle stream is kept apart from the initialization stream
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5348_5546_464c_4531);
    let labels = train.label_indices();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batch: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut batch_labels = Vec::with_capacity(cfg.batch_size);
    let mut history = TrainHistory::default();

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch_labels.clear();
            for &i in chunk {
                batch.push(train.row(i));
                batch_labels.push(labels[i]);
            }
            let loss = accumulate(&model, &batch, &batch_labels, &mut ws, &mut grads, Some(&mut correct))?;
            loss_sum += loss * chunk.len() as f64;
            adam_step(&mut model, &grads, &mut state, &adam);
            grads.clear(dims.hidden);
        }
        let (val_loss, val_accuracy) = match val {
            Some(v) => {
                let (l, c, _) = score(&model, v, &mut ws);
                (Some(l), Some(c as f64 / v.len() as f64))
            }
            None => (None, None),
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_loss,
            val_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((model, history))
}

/// Accuracy, mean loss and confusion matrix on `test`.
pub fn evaluate(model: &MlpModel, test: &FeatureSet) -> Result<EvalReport> {
    check_set(test, Some(model.dims), "test")?;
    if model.dims.classes != NUM_CLASSES {
        return Err(Error::Shape {
            expected: NUM_CLASSES,
            actual: model.dims.classes,
        });
    }
    let mut ws = Workspace::new(model.dims);
    let (loss, correct, predictions) = score(model, test, &mut ws);
    let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    for (label, &p) in test.labels.iter().zip(&predictions) {
        confusion[label.index()][p] += 1;
    }
    let per_class_recall = std::array::from_fn(|c| {
        let total: usize = confusion[c].iter().sum();
        (total > 0).then(|| confusion[c][c] as f64 / total as f64)
    });
    Ok(EvalReport {
        accuracy: correct as f64 / test.len() as f64,
        loss,
        confusion,
        per_class_recall,
        total: test.len(),
        history: None,
        config: None,
    })
}
