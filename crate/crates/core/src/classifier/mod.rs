//! Single-hidden-layer ReLU network with a softmax output, trained with Adam
//! on softmax cross-entropy.
//!
//! Persistence-image features are mostly exact zeros, so the first layer only
//! touches weight rows of nonzero inputs, and Adam only visits rows that have
//! ever received a gradient. Rows that never did have zero moments and would
//! not move under a dense update either, so both shortcuts leave every
//! result bit-for-bit unchanged.

mod adam;
mod checkpoint;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wafer_sim::NUM_CLASSES;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_model, save_model};
pub use train::{evaluate, train, EpochRecord, EvalReport, TrainConfig, TrainHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            input: 800,
            hidden: 1024,
            classes: NUM_CLASSES,
        }
    }
}

/// Per-feature affine rescaling `(x - mean) / std`, fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Fits on `rows` (each of length `dim`); constant features keep unit scale.
    pub fn fit(data: &[f64], dim: usize) -> Self {
        let n = (data.len() / dim).max(1) as f64;
        let mut mean = vec![0.0; dim];
        for row in data.chunks_exact(dim) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in data.chunks_exact(dim) {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (((o, x), m), s) in out.iter_mut().zip(x).zip(&self.mean).zip(&self.std) {
            *o = (x - m) / s;
        }
    }
}

/// `input -> hidden (ReLU) -> classes (softmax)`.
///
/// `w1` is `input x hidden` and `w2` is `hidden x classes`, both row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub dims: ModelDims,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// Applied to every input before the first layer when present.
    pub scaler: Option<Scaler>,
}

impl MlpModel {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            dims,
            w1: vec![0.0; dims.input * dims.hidden],
            b1: vec![0.0; dims.hidden],
            w2: vec![0.0; dims.hidden * dims.classes],
            b2: vec![0.0; dims.classes],
            scaler: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .iter()
            .all(|p| p.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims.input {
            return Err(Error::Shape {
                expected: self.dims.input,
                actual: x.len(),
            });
        }
        Ok(())
    }
}

/// Uniform weights with standard deviation `1 / sqrt(fan_in)` and zero
/// biases. Deterministic in `seed`.
pub fn init_model(dims: ModelDims, seed: u64) -> MlpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = MlpModel::zeros(dims);
    let mut fill = |w: &mut [f64], fan_in: usize| {
        let limit = (3.0 / fan_in as f64).sqrt();
        w.iter_mut().for_each(|v| *v = rng.random_range(-limit..limit));
    };
    fill(&mut model.w1, dims.input);
    fill(&mut model.w2, dims.hidden);
    model
}

/// Gradients of the mean batch loss, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// Rows of `w1` that may be nonzero; every other row is exactly zero.
    rows: Vec<usize>,
    touched: Vec<bool>,
}

impl Gradients {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            w1: vec![0.0; dims.input * dims.hidden],
            b1: vec![0.0; dims.hidden],
            w2: vec![0.0; dims.hidden * dims.classes],
            b2: vec![0.0; dims.classes],
            rows: Vec::new(),
            touched: vec![false; dims.input],
        }
    }

    /// Rows of `w1` that may hold nonzero entries.
    pub fn w1_rows(&self) -> &[usize] {
        &self.rows
    }

    /// Marks every row of `w1` as possibly nonzero, for gradients filled in
    /// by hand.
    pub fn mark_all_rows(&mut self) {
        self.rows = (0..self.touched.len()).collect();
        self.touched.fill(true);
    }

    fn touch(&mut self, k: usize) {
        if !self.touched[k] {
            self.touched[k] = true;
            self.rows.push(k);
        }
    }

    fn clear(&mut self, hidden: usize) {
        for &k in &self.rows {
            self.w1[k * hidden..(k + 1) * hidden].fill(0.0);
            self.touched[k] = false;
        }
        self.rows.clear();
        self.b1.fill(0.0);
        self.w2.fill(0.0);
        self.b2.fill(0.0);
    }
}

/// Buffers for one mini-batch, reused from batch to batch.
///
/// Both first-layer products run tile by tile over the hidden units, so the
/// weight slices of one tile stay cached for the whole batch. Every
/// accumulator receives its terms in ascending feature (forward) or sample
/// (gradient) order.
pub(crate) struct Workspace {
    dims: ModelDims,
    rows: usize,
    /// `rows x input`, used only when the model has a scaler.
    scaled: Vec<f64>,
    /// `rows x hidden`, post-ReLU.
    act: Vec<f64>,
    /// `rows x classes`.
    probs: Vec<f64>,
    /// Cross-entropy of each sample, when labels were given.
    losses: Vec<f64>,
    delta_out: Vec<f64>,
    /// `rows x hidden`.
    delta_hidden: Vec<f64>,
    /// Nonzero inputs of each sample, ascending by feature.
    by_sample: Vec<Vec<(usize, f64)>>,
    /// Nonzero inputs of the batch grouped by feature, in sample order.
    by_feature: Vec<Vec<(usize, f64)>>,
    /// Features with at least one nonzero input, ascending.
    features: Vec<usize>,
}

/// Inference processes this many samples per pass.
const EVAL_BATCH: usize = 64;

impl Workspace {
    pub(crate) fn new(dims: ModelDims) -> Self {
        Self {
            dims,
            rows: 0,
            scaled: Vec::new(),
            act: Vec::new(),
            probs: Vec::new(),
            losses: Vec::new(),
            delta_out: vec![0.0; dims.classes],
            delta_hidden: Vec::new(),
            by_sample: Vec::new(),
            by_feature: vec![Vec::new(); dims.input],
            features: Vec::new(),
        }
    }

    pub(crate) fn loss(&self, s: usize) -> f64 {
        self.losses[s]
    }

    pub(crate) fn probs(&self, s: usize) -> &[f64] {
        let c = self.dims.classes;
        &self.probs[s * c..(s + 1) * c]
    }

    fn resize(&mut self, rows: usize, scaled: bool) {
        let ModelDims { input, hidden, classes } = self.dims;
        self.rows = rows;
        if scaled {
            self.scaled.resize(rows * input, 0.0);
        }
        self.act.resize(rows * hidden, 0.0);
        self.probs.resize(rows * classes, 0.0);
        self.losses.resize(rows, 0.0);
        self.delta_hidden.resize(rows * hidden, 0.0);
        self.by_sample.resize(rows, Vec::new());
        self.by_sample.iter_mut().for_each(Vec::clear);
        for &k in &self.features {
            self.by_feature[k].clear();
        }
        self.features.clear();
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

/// Hidden units per register tile.
const TILE: usize = 16;

/// `out[j] += x * mat[r * stride + offset + j]` for each term `(r, x)`, with
/// the terms of every element summed in the given order.
#[inline]
fn tile_accumulate(out: &mut [f64], terms: &[(usize, f64)], mat: &[f64], stride: usize, offset: usize) {
    if let Ok(out) = <&mut [f64; TILE]>::try_from(&mut *out) {
        let mut acc = *out;
        for &(r, x) in terms {
            let start = r * stride + offset;
            let row: &[f64; TILE] = mat[start..start + TILE].try_into().unwrap();
            for j in 0..TILE {
                acc[j] += x * row[j];
            }
        }
        *out = acc;
    } else {
        for &(r, x) in terms {
            let start = r * stride + offset;
            axpy(x, &mat[start..start + out.len()], out);
        }
    }
}

/// Logits of one sample: `b2 + act * W2`, accumulated over hidden units in
/// order.
#[inline]
fn output_logits<const C: usize>(act: &[f64], w2: &[f64], b2: &[f64], out: &mut [f64]) {
    let mut acc: [f64; C] = b2.try_into().unwrap();
    for (a, w) in act.iter().zip(w2.chunks_exact(C)) {
        for c in 0..C {
            acc[c] += a * w[c];
        }
    }
    out.copy_from_slice(&acc);
}

fn output_logits_any(act: &[f64], w2: &[f64], b2: &[f64], out: &mut [f64]) {
    out.copy_from_slice(b2);
    for (a, w) in act.iter().zip(w2.chunks_exact(b2.len())) {
        axpy(*a, w, out);
    }
}

/// Output-layer backward pass of one sample: adds `act (x) delta` into `gw2`
/// and writes the ReLU-masked hidden deltas.
#[inline]
fn output_backward<const C: usize>(act: &[f64], w2: &[f64], delta: &[f64], gw2: &mut [f64], delta_hidden: &mut [f64]) {
    let d: [f64; C] = delta.try_into().unwrap();
    for (((a, w), g), dh) in act
        .iter()
        .zip(w2.chunks_exact(C))
        .zip(gw2.chunks_exact_mut(C))
        .zip(delta_hidden)
    {
        let mut sum = 0.0;
        for c in 0..C {
            g[c] += a * d[c];
            sum += w[c] * d[c];
        }
        *dh = if *a > 0.0 { sum } else { 0.0 };
    }
}

fn output_backward_any(act: &[f64], w2: &[f64], delta: &[f64], gw2: &mut [f64], delta_hidden: &mut [f64]) {
    let c = delta.len();
    for (((a, w), g), dh) in act
        .iter()
        .zip(w2.chunks_exact(c))
        .zip(gw2.chunks_exact_mut(c))
        .zip(delta_hidden)
    {
        axpy(*a, delta, g);
        let sum: f64 = w.iter().zip(delta).map(|(w, d)| w * d).sum();
        *dh = if *a > 0.0 { sum } else { 0.0 };
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Forward pass of a batch of checked inputs. Probabilities are left in the
/// workspace; returns the summed `-ln p[label]` when labels are given.
pub(crate) fn forward_batch(model: &MlpModel, xs: &[&[f64]], labels: Option<&[usize]>, ws: &mut Workspace) -> f64 {
    let ModelDims { input, hidden, classes } = model.dims;
    ws.resize(xs.len(), model.scaler.is_some());
    for (s, x) in xs.iter().enumerate() {
        let x = match &model.scaler {
            Some(scaler) => {
                let out = &mut ws.scaled[s * input..(s + 1) * input];
                scaler.apply(x, out);
                &*out
            }
            None => x,
        };
        for (k, &xk) in x.iter().enumerate() {
            if xk != 0.0 {
                if ws.by_feature[k].is_empty() {
                    ws.features.push(k);
                }
                ws.by_feature[k].push((s, xk));
                ws.by_sample[s].push((k, xk));
            }
        }
    }
    ws.features.sort_unstable();

    for act in ws.act.chunks_exact_mut(hidden) {
        act.copy_from_slice(&model.b1);
    }
    for t in (0..hidden).step_by(TILE) {
        let w = TILE.min(hidden - t);
        for (s, terms) in ws.by_sample.iter().enumerate() {
            let out = &mut ws.act[s * hidden + t..s * hidden + t + w];
            tile_accumulate(out, terms, &model.w1, hidden, t);
        }
    }
    ws.act.iter_mut().for_each(|a| *a = a.max(0.0));

    let mut loss = 0.0;
    for s in 0..ws.rows {
        let act = &ws.act[s * hidden..(s + 1) * hidden];
        let logits = &mut ws.probs[s * classes..(s + 1) * classes];
        match classes {
            5 => output_logits::<5>(act, &model.w2, &model.b2, logits),
            _ => output_logits_any(act, &model.w2, &model.b2, logits),
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shifted_label = labels.map(|l| logits[l[s]] - max);
        let mut sum = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            sum += *l;
        }
        if let Some(z) = shifted_label {
            ws.losses[s] = sum.ln() - z;
            loss += ws.losses[s];
        }
        logits.iter_mut().for_each(|p| *p /= sum);
    }
    loss
}

/// Adds the gradient of `scale * (summed loss)` of the batch last passed
/// through [`forward_batch`] into `grads`.
pub(crate) fn backward_batch(
    model: &MlpModel,
    labels: &[usize],
    scale: f64,
    ws: &mut Workspace,
    grads: &mut Gradients,
) {
    let ModelDims { hidden, classes, .. } = model.dims;
    for (s, &label) in labels.iter().enumerate() {
        for (c, d) in ws.delta_out.iter_mut().enumerate() {
            let target = if c == label { 1.0 } else { 0.0 };
            *d = (ws.probs[s * classes + c] - target) * scale;
        }
        axpy(1.0, &ws.delta_out, &mut grads.b2);
        let act = &ws.act[s * hidden..(s + 1) * hidden];
        let delta_hidden = &mut ws.delta_hidden[s * hidden..(s + 1) * hidden];
        match classes {
            5 => output_backward::<5>(act, &model.w2, &ws.delta_out, &mut grads.w2, delta_hidden),
            _ => output_backward_any(act, &model.w2, &ws.delta_out, &mut grads.w2, delta_hidden),
        }
        axpy(1.0, delta_hidden, &mut grads.b1);
    }
    for &k in &ws.features {
        grads.touch(k);
    }
    for t in (0..hidden).step_by(TILE) {
        let w = TILE.min(hidden - t);
        for &k in &ws.features {
            let out = &mut grads.w1[k * hidden + t..k * hidden + t + w];
            tile_accumulate(out, &ws.by_feature[k], &ws.delta_hidden, hidden, t);
        }
    }
}

/// Calls `f(sample index, probabilities, loss)` for every input, in order.
/// The loss is 0 when no labels are given.
pub(crate) fn for_each_prediction(
    model: &MlpModel,
    xs: &[&[f64]],
    labels: Option<&[usize]>,
    ws: &mut Workspace,
    mut f: impl FnMut(usize, &[f64], f64),
) {
    for (c, chunk) in xs.chunks(EVAL_BATCH).enumerate() {
        let start = c * EVAL_BATCH;
        let chunk_labels = labels.map(|l| &l[start..start + chunk.len()]);
        forward_batch(model, chunk, chunk_labels, ws);
        for s in 0..chunk.len() {
            let loss = if labels.is_some() { ws.loss(s) } else { 0.0 };
            f(start + s, ws.probs(s), loss);
        }
    }
}

/// Softmax class probabilities, one row per input.
pub fn forward(model: &MlpModel, batch: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    for x in batch {
        model.check_input(x)?;
    }
    let mut out = Vec::with_capacity(batch.len());
    for_each_prediction(model, batch, None, &mut Workspace::new(model.dims), |_, p, _| {
        out.push(p.to_vec())
    });
    Ok(out)
}

/// Most probable class of each input.
pub fn predict(model: &MlpModel, batch: &[&[f64]]) -> Result<Vec<usize>> {
    Ok(forward(model, batch)?.iter().map(|p| argmax(p)).collect())
}

/// Mean cross-entropy over the batch and its gradient.
pub fn loss_and_grad(model: &MlpModel, batch: &[&[f64]], labels: &[usize]) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros(model.dims);
    let loss = accumulate(model, batch, labels, &mut Workspace::new(model.dims), &mut grads, None)?;
    Ok((loss, grads))
}

/// Adds the batch-mean gradient into `grads` and returns the mean loss. When
/// `correct` is given it is incremented per correctly predicted sample.
pub(crate) fn accumulate(
    model: &MlpModel,
    batch: &[&[f64]],
    labels: &[usize],
    ws: &mut Workspace,
    grads: &mut Gradients,
    correct: Option<&mut usize>,
) -> Result<f64> {
    if batch.len() != labels.len() {
        return Err(Error::Shape {
            expected: batch.len(),
            actual: labels.len(),
        });
    }
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    for (x, &y) in batch.iter().zip(labels) {
        model.check_input(x)?;
        if y >= model.dims.classes {
            return Err(Error::Label(y));
        }
    }
    let scale = 1.0 / batch.len() as f64;
    let loss = forward_batch(model, batch, Some(labels), ws);
    if let Some(c) = correct {
        *c += labels
            .iter()
            .enumerate()
            .filter(|&(s, &y)| argmax(ws.probs(s)) == y)
            .count();
    }
    backward_batch(model, labels, scale, ws, grads);
    Ok(loss * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelDims {
        ModelDims {
            input: 6,
            hidden: 7,
            classes: 5,
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = init_model(small(), 3);
        assert_eq!(a, init_model(small(), 3));
        assert_ne!(a, init_model(small(), 4));
        assert!(a.b1.iter().chain(&a.b2).all(|&b| b == 0.0));
    }

    #[test]
    fn init_scale() {
        let dims = ModelDims::default();
        for seed in 0..3 {
            let m = init_model(dims, seed);
            for (w, fan_in) in [(&m.w1, dims.input), (&m.w2, dims.hidden)] {
                let n = w.len() as f64;
                let mean = w.iter().sum::<f64>() / n;
                let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                let target = 1.0 / (fan_in as f64).sqrt();
                assert!((std / target - 1.0).abs() < 0.2, "std {std} vs {target}");
            }
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = MlpModel::zeros(ModelDims::default());
        let x = vec![0.0; 800];
        let p = forward(&m, &[&x]).unwrap();
        assert!(p[0].iter().all(|&v| v == 0.2));
    }

    #[test]
    fn rows_sum_to_one() {
        let m = init_model(small(), 1);
        let xs: Vec<Vec<f64>> = (0..10)
            .map(|i| (0..6).map(|k| ((i * 7 + k * 3) % 11) as f64 - 4.0).collect())
            .collect();
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        for row in forward(&m, &refs).unwrap() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn shifting_output_bias_changes_nothing() {
        let m = init_model(small(), 2);
        let mut shifted = m.clone();
        shifted.b2.iter_mut().for_each(|b| *b += 3.7);
        let x = [1.0, 0.0, -2.0, 0.5, 0.0, 3.0];
        let (p, q) = (forward(&m, &[&x]).unwrap(), forward(&shifted, &[&x]).unwrap());
        for (a, b) in p[0].iter().zip(&q[0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_prediction_loss_is_ln5() {
        let m = MlpModel::zeros(small());
        let x = [0.3; 6];
        let (loss, _) = loss_and_grad(&m, &[&x, &x], &[0, 4]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_has_tiny_loss() {
        let mut m = MlpModel::zeros(small());
        m.b2[2] = 50.0;
        let (loss, _) = loss_and_grad(&m, &[&[0.0; 6]], &[2]).unwrap();
        assert!((0.0..1e-20).contains(&loss));
    }

    #[test]
    fn bad_shapes_and_labels() {
        let m = init_model(small(), 0);
        assert!(matches!(
            forward(&m, &[&[1.0, 2.0]]),
            Err(Error::Shape { expected: 6, actual: 2 })
        ));
        assert!(matches!(loss_and_grad(&m, &[&[0.0; 6]], &[5]), Err(Error::Label(5))));
    }

    #[test]
    fn gradient_rows_track_nonzero_inputs() {
        let m = init_model(small(), 5);
        let x = [0.0, 1.5, 0.0, 0.0, -2.0, 0.0];
        let (_, g) = loss_and_grad(&m, &[&x], &[1]).unwrap();
        let mut rows = g.w1_rows().to_vec();
        rows.sort();
        assert_eq!(rows, vec![1, 4]);
        for k in [0, 2, 3, 5] {
            assert!(g.w1[k * 7..(k + 1) * 7].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn scaler_standardizes() {
        let data = [1.0, 5.0, 3.0, 5.0];
        let s = Scaler::fit(&data, 2);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
        let mut out = [0.0; 2];
        s.apply(&[3.0, 5.0], &mut out);
        assert_eq!(out, [1.0, 0.0]);
    }
}
