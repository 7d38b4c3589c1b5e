use serde::{Deserialize, Serialize};

use super::{Gradients, MlpModel, ModelDims};
use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidParameter(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    m: MlpModel,
    v: MlpModel,
    /// Rows of `w1` that have received a gradient at some step.
    active: Vec<usize>,
    is_active: Vec<bool>,
    zero_row: Vec<f64>,
}

impl AdamState {
    pub fn new(dims: ModelDims) -> Self {
        Self {
            t: 0,
            m: MlpModel::zeros(dims),
            v: MlpModel::zeros(dims),
            active: Vec::new(),
            is_active: vec![false; dims.input],
            zero_row: vec![0.0; dims.hidden],
        }
    }
}

/// Per-step constants. The update is written as
/// `p -= lr_t * m / (sqrt(v) + eps_t)` with `lr_t = lr * sqrt(bc2) / bc1` and
/// `eps_t = eps * sqrt(bc2)`, which needs one division per parameter.
struct Step {
    b1: f64,
    b2: f64,
    lr_t: f64,
    eps_t: f64,
}

impl Step {
    #[inline]
    fn apply(&self, p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]) {
        for (((p, m), v), g) in p.iter_mut().zip(m).zip(v).zip(g) {
            *m = self.b1 * *m + (1.0 - self.b1) * g;
            *v = self.b2 * *v + (1.0 - self.b2) * g * g;
            *p -= self.lr_t * *m / (v.sqrt() + self.eps_t);
        }
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step(model: &mut MlpModel, grads: &Gradients, state: &mut AdamState, cfg: &AdamConfig) {
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let root_bc2 = (1.0 - cfg.beta2.powf(t)).sqrt();
    let step = Step {
        b1: cfg.beta1,
        b2: cfg.beta2,
        lr_t: cfg.learning_rate * root_bc2 / bc1,
        eps_t: cfg.eps * root_bc2,
    };
    for &k in grads.w1_rows() {
        if !state.is_active[k] {
            state.is_active[k] = true;
            state.active.push(k);
        }
    }
    let h = model.dims.hidden;
    for &k in &state.active {
        let r = k * h..(k + 1) * h;
        let g = if grads.touched[k] {
            &grads.w1[r.clone()]
        } else {
            &state.zero_row[..]
        };
        step.apply(
            &mut model.w1[r.clone()],
            &mut state.m.w1[r.clone()],
            &mut state.v.w1[r],
            g,
        );
    }
    step.apply(&mut model.b1, &mut state.m.b1, &mut state.v.b1, &grads.b1);
    step.apply(&mut model.w2, &mut state.m.w2, &mut state.v.w2, &grads.w2);
    step.apply(&mut model.b2, &mut state.m.b2, &mut state.v.b2, &grads.b2);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{init_model, loss_and_grad};

    fn dims() -> ModelDims {
        ModelDims {
            input: 4,
            hidden: 3,
            classes: 5,
        }
    }

    /// Textbook Adam over a flat parameter vector, with explicit bias-corrected
    /// moments.
    fn dense_step(p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64], t: u64, c: &AdamConfig) {
        for i in 0..p.len() {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            let mh = m[i] / (1.0 - c.beta1.powf(t as f64));
            let vh = v[i] / (1.0 - c.beta2.powf(t as f64));
            p[i] -= c.learning_rate * mh / (vh.sqrt() + c.eps);
        }
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut model = init_model(dims(), 1);
        let before = model.clone();
        let mut g = Gradients::zeros(dims());
        g.mark_all_rows();
        let mut state = AdamState::new(dims());
        adam_step(&mut model, &g, &mut state, &AdamConfig::default());
        assert_eq!(model, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut model = MlpModel::zeros(dims());
        let mut g = Gradients::zeros(dims());
        g.mark_all_rows();
        g.w1.iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = (i as f64 - 5.5) * 0.3);
        g.b2 = vec![2.0, -0.5, 1e-3, -7.0, 0.25];
        let mut state = AdamState::new(dims());
        let cfg = AdamConfig::default();
        adam_step(&mut model, &g, &mut state, &cfg);
        for (p, g) in model.w1.iter().zip(&g.w1).chain(model.b2.iter().zip(&g.b2)) {
            // m_hat / sqrt(v_hat) = g / |g|, up to eps
            let expected = -cfg.learning_rate * g.signum();
            assert!(
                (p - expected).abs() <= cfg.learning_rate * cfg.eps / g.abs() + 1e-15,
                "{p} vs {expected}"
            );
        }
    }

    #[test]
    fn matches_textbook_dense_adam() {
        let d = dims();
        let mut model = init_model(d, 7);
        let mut flat = [model.w1.clone(), model.b1.clone(), model.w2.clone(), model.b2.clone()].concat();
        let mut m = vec![0.0; flat.len()];
        let mut v = vec![0.0; flat.len()];
        let mut state = AdamState::new(d);
        let cfg = AdamConfig::default();
        // inputs touch different rows at different steps
        let inputs = [
            [1.0, 0.0, 0.0, 0.5],
            [0.0, 0.0, 2.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.3, -1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        for (t, x) in inputs.iter().enumerate() {
            let (_, g) = loss_and_grad(&model, &[x], &[t % 5]).unwrap();
            let gflat = [g.w1.clone(), g.b1.clone(), g.w2.clone(), g.b2.clone()].concat();
            adam_step(&mut model, &g, &mut state, &cfg);
            dense_step(&mut flat, &mut m, &mut v, &gflat, t as u64 + 1, &cfg);
            let ours = [model.w1.clone(), model.b1.clone(), model.w2.clone(), model.b2.clone()].concat();
            for (a, b) in ours.iter().zip(&flat) {
                assert!((a - b).abs() <= 1e-15 * (1.0 + b.abs()), "step {t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        for cfg in [
            AdamConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            AdamConfig {
                beta1: 1.0,
                ..Default::default()
            },
            AdamConfig {
                beta2: -0.1,
                ..Default::default()
            },
            AdamConfig {
                eps: 0.0,
                ..Default::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
        assert!(AdamConfig::default().validate().is_ok());
    }
}
