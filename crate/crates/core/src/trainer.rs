//! Adam and AdamW, and the training loop with optional projection onto the
//! bounded two-layer class.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{loss_and_grad, Batch, LossContext, LossSpec, RegKind, Targets};
use crate::nets::Model;
use crate::par::ExecMode;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimizerState {
    pub fn new(n: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

fn check_step(params: &[f64], grads: &[f64], state: &OptimizerState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Domain(format!(
            "optimizer shapes differ: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Training {
            epoch: state.step as usize,
            reason: "non-finite gradient".into(),
        });
    }
    Ok(())
}

fn adam_update(params: &mut [f64], grads: &[f64], state: &mut OptimizerState) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let mh = state.m[i] / bc1;
        let vh = state.v[i] / bc2;
        params[i] -= state.lr * mh / (vh.sqrt() + state.eps);
    }
}

/// Bias-corrected Adam step. Ignores `weight_decay`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState) -> Result<()> {
    check_step(params, grads, state)?;
    adam_update(params, grads, state);
    Ok(())
}

/// Decoupled weight decay `θ ← θ − lr·wd·θ`, then the Adam step.
pub fn adamw_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState) -> Result<()> {
    check_step(params, grads, state)?;
    if state.weight_decay < 0.0 {
        return Err(Error::Domain("weight decay must be >= 0".into()));
    }
    if state.weight_decay != 0.0 {
        let f = 1.0 - state.lr * state.weight_decay;
        for p in params.iter_mut() {
            *p *= f;
        }
    }
    adam_update(params, grads, state);
    Ok(())
}

/// Training inputs: row-major points with labels or scalar targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub x: Vec<f64>,
    pub d: usize,
    pub targets: TargetData,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetData {
    Labels { labels: Vec<usize>, classes: usize },
    Values(Vec<f64>),
}

impl TrainData {
    pub fn labeled(x: Vec<f64>, d: usize, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Label { label: bad, classes });
        }
        let out = Self {
            x,
            d,
            targets: TargetData::Labels { labels, classes },
        };
        out.batch()?;
        Ok(out)
    }

    pub fn valued(x: Vec<f64>, d: usize, values: Vec<f64>) -> Result<Self> {
        let out = Self {
            x,
            d,
            targets: TargetData::Values(values),
        };
        out.batch()?;
        Ok(out)
    }

    pub fn len(&self) -> usize {
        match &self.targets {
            TargetData::Labels { labels, .. } => labels.len(),
            TargetData::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn batch(&self) -> Result<Batch<'_>> {
        let t = match &self.targets {
            TargetData::Labels { labels, .. } => Targets::Labels(labels),
            TargetData::Values(v) => Targets::Values(v),
        };
        Batch::new(&self.x, self.d, t)
    }

    /// Copies the rows in `idx`.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let d = self.d;
        let mut x = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            x.extend_from_slice(&self.x[i * d..(i + 1) * d]);
        }
        let targets = match &self.targets {
            TargetData::Labels { labels, classes } => TargetData::Labels {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
            },
            TargetData::Values(v) => TargetData::Values(idx.iter().map(|&i| v[i]).collect()),
        };
        Self { x, d, targets }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// `None` for full-batch gradients.
    pub batch_size: Option<usize>,
    pub lr: f64,
    /// Added to `α` when the regularizer is L2.
    pub weight_decay: f64,
    pub seed: u64,
    /// Project onto the bounded two-layer class after every step.
    pub project_to: Option<f64>,
    /// Per-parameter mask; `false` entries are never updated.
    pub trainable: Option<Vec<bool>>,
    pub mode: ExecMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: None,
            lr: 1e-3,
            weight_decay: 0.0,
            seed: 0,
            project_to: None,
            trainable: None,
            mode: ExecMode::Parallel,
        }
    }
}

/// Outcome of [`train`]. Equality ignores `wall_time_secs`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean minibatch loss per epoch, taken before each step.
    pub history: Vec<f64>,
    /// Smallest loss seen: the history and the final evaluation.
    pub best_loss: f64,
    /// Full-data loss after the last step.
    pub final_loss: f64,
    /// `final_loss − best_loss`.
    pub delta_achieved: f64,
    pub wall_time_secs: f64,
    pub seed: u64,
}

impl PartialEq for TrainReport {
    fn eq(&self, other: &Self) -> bool {
        self.history == other.history
            && self.best_loss == other.best_loss
            && self.final_loss == other.final_loss
            && self.delta_achieved == other.delta_achieved
            && self.seed == other.seed
    }
}

fn full_loss<M: Model>(model: &M, data: &TrainData, spec: &LossSpec, seed: u64, mode: ExecMode) -> Result<f64> {
    let batch = data.batch()?;
    let ctx = LossContext::prepare(model, &batch, spec, seed, mode)?;
    Ok(loss_and_grad(model, &batch, spec, &ctx, mode)?.0)
}

/// Empirical loss of `model` on all of `data`, with the same neighbor and
/// attack seeds [`train`] uses for its final evaluation.
pub fn evaluate_loss<M: Model>(model: &M, data: &TrainData, spec: &LossSpec, seed: u64) -> Result<f64> {
    full_loss(model, data, spec, crate::mix_seed(seed, u64::MAX), ExecMode::Parallel)
}

/// Minimizes the empirical loss with Adam (AdamW when there is weight
/// decay). Each epoch visits the data in a fresh seeded order; graph
/// neighborhoods are redrawn per batch and adversarial points recomputed
/// against the current parameters.
pub fn train<M: Model>(model: &mut M, data: &TrainData, spec: &LossSpec, cfg: &TrainConfig) -> Result<TrainReport> {
    let start = Instant::now();
    if data.is_empty() {
        return Err(Error::Precondition("training data is empty".into()));
    }
    spec.validate()?;
    let n = data.len();
    let wd = cfg.weight_decay + if spec.reg == RegKind::L2 { spec.alpha } else { 0.0 };
    let mut state = OptimizerState::new(model.num_params(), cfg.lr, wd);
    let mut params = model.params();
    if let Some(mask) = &cfg.trainable {
        if mask.len() != params.len() {
            return Err(Error::Precondition(format!(
                "trainable mask has {} entries for {} parameters",
                mask.len(),
                params.len()
            )));
        }
    }
    let frozen = params.clone();
    let bs = cfg.batch_size.unwrap_or(n).clamp(1, n);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let epoch_seed = crate::mix_seed(cfg.seed, epoch as u64);
        if bs < n {
            order.shuffle(&mut crate::seeded_rng(epoch_seed));
        }
        let mut total = 0.0;
        let mut batches = 0usize;
        for (b, idx) in order.chunks(bs).enumerate() {
            let sub;
            let batch = if bs < n {
                sub = data.subset(idx);
                sub.batch()?
            } else {
                data.batch()?
            };
            let ctx = LossContext::prepare(model, &batch, spec, crate::mix_seed(epoch_seed, b as u64), cfg.mode)?;
            let (loss, grad) = loss_and_grad(model, &batch, spec, &ctx, cfg.mode).map_err(|e| Error::Training {
                epoch,
                reason: e.to_string(),
            })?;
            if wd > 0.0 {
                adamw_step(&mut params, &grad, &mut state)
            } else {
                adam_step(&mut params, &grad, &mut state)
            }
            .map_err(|e| Error::Training {
                epoch,
                reason: e.to_string(),
            })?;
            if let Some(mask) = &cfg.trainable {
                for ((p, f), &t) in params.iter_mut().zip(&frozen).zip(mask) {
                    if !t {
                        *p = *f;
                    }
                }
            }
            model.set_params(&params);
            if let Some(bound) = cfg.project_to {
                model.project(bound);
                params = model.params();
            }
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        if !mean.is_finite() {
            return Err(Error::Training {
                epoch,
                reason: "non-finite loss".into(),
            });
        }
        history.push(mean);
    }
    let final_loss = full_loss(model, data, spec, crate::mix_seed(cfg.seed, u64::MAX), cfg.mode)?;
    let best_loss = history.iter().copied().fold(final_loss, f64::min);
    Ok(TrainReport {
        history,
        best_loss,
        final_loss,
        delta_achieved: final_loss - best_loss,
        wall_time_secs: start.elapsed().as_secs_f64(),
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::DataTerm;
    use crate::nets::{Activation, Mlp, TwoLayerNet};

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = vec![0.3, -1.2];
        let mut s = OptimizerState::new(2, 1e-3, 0.0);
        adam_step(&mut p, &[0.0, 0.0], &mut s).unwrap();
        assert_eq!(p, vec![0.3, -1.2]);
    }

    #[test]
    fn quadratic_converges() {
        let mut p = vec![1.0];
        let mut s = OptimizerState::new(1, 1e-3, 0.0);
        for _ in 0..5000 {
            let g = 2.0 * (p[0] - 3.0);
            adam_step(&mut p, &[g], &mut s).unwrap();
        }
        assert!((p[0] - 3.0).abs() <= 1e-3, "{}", p[0]);
    }

    #[test]
    fn first_step_is_scale_free() {
        let mut a = vec![1.0];
        let mut b = vec![1.0];
        let mut sa = OptimizerState::new(1, 1e-3, 0.0);
        let mut sb = OptimizerState::new(1, 1e-3, 0.0);
        adam_step(&mut a, &[0.5], &mut sa).unwrap();
        adam_step(&mut b, &[5.0], &mut sb).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-6);
        assert!(((1.0 - a[0]) - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn adamw_examples() {
        let mut p = vec![1.0];
        let mut s = OptimizerState::new(1, 1e-3, 0.1);
        adamw_step(&mut p, &[0.0], &mut s).unwrap();
        assert!((p[0] - 0.9999).abs() < 1e-15);
        let g = [0.3, -0.7, 0.0];
        let mut a = vec![1.0, 2.0, -3.0];
        let mut b = a.clone();
        let mut sa = OptimizerState::new(3, 1e-2, 0.0);
        let mut sb = sa.clone();
        for _ in 0..10 {
            adam_step(&mut a, &g, &mut sa).unwrap();
            adamw_step(&mut b, &g, &mut sb).unwrap();
        }
        assert_eq!(a, b);
        let mut p = vec![3.0, -4.0];
        let mut s = OptimizerState::new(2, 0.1, 0.5);
        let mut last = 5.0;
        for _ in 0..20 {
            adamw_step(&mut p, &[0.0, 0.0], &mut s).unwrap();
            let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm < last);
            last = norm;
        }
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut p = vec![1.0];
        let mut s = OptimizerState::new(1, 1e-3, 0.0);
        assert!(matches!(adam_step(&mut p, &[f64::NAN], &mut s), Err(Error::Training { .. })));
    }

    fn moons_like() -> TrainData {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let t = i as f64 / 40.0;
            x.extend([t, (t * 6.0).sin() * 0.4 + 0.5]);
            y.push(usize::from(t > 0.5));
        }
        TrainData::labeled(x, 2, y, 2).unwrap()
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let data = moons_like();
        let mut m = Mlp::new(&[2, 8, 2], 1);
        let before = m.clone();
        let spec = LossSpec::new(DataTerm::Nll, RegKind::None, 0.0);
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let r = train(&mut m, &data, &spec, &cfg).unwrap();
        assert_eq!(m, before);
        assert_eq!(r.delta_achieved, 0.0);
        assert!(r.history.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let data = moons_like();
        let spec = LossSpec::new(DataTerm::Nll, RegKind::Tik, 0.01);
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: Some(8),
            lr: 1e-2,
            seed: 4,
            ..TrainConfig::default()
        };
        let mut a = Mlp::new(&[2, 8, 2], 1);
        let mut b = Mlp::new(&[2, 8, 2], 1);
        let ra = train(&mut a, &data, &spec, &cfg).unwrap();
        let rb = train(&mut b, &data, &spec, &TrainConfig { mode: ExecMode::Sequential, ..cfg.clone() }).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
        assert!(ra.final_loss < ra.history[0]);
        assert!(ra.delta_achieved >= 0.0);
        assert!(ra.history.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn projection_keeps_class() {
        let x: Vec<f64> = (0..32).map(|i| -1.0 + 2.0 * i as f64 / 31.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 50.0 * v * v).collect();
        let data = TrainData::valued(x, 1, y).unwrap();
        let spec = LossSpec::new(DataTerm::Quadratic, RegKind::Tik, 1.0);
        let mut net = TwoLayerNet::init(8, 1, 0.5, Activation::Softplus(3.0), 2);
        let cfg = TrainConfig {
            epochs: 50,
            lr: 0.1,
            project_to: Some(0.5),
            ..TrainConfig::default()
        };
        train(&mut net, &data, &spec, &cfg).unwrap();
        assert!(net.in_class(0.5, 1e-12));
    }
}
