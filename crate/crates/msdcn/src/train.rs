//! Huber loss, Adam, and the training loop with validation-based early
//! stopping. Everything is deterministic under a seed: batch shuffling
//! uses a seed-derived permutation per epoch and all reductions run in
//! fixed order on one thread.

use crate::data::Windows;
use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::model::{self, ModelConfig, ParamGrads, ParameterSet};
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub huber_delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            huber_delta: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0)
            || !(self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0)
        {
            return Err(Error::Config("adam betas must lie in (0, 1)".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if !(self.huber_delta > 0.0) {
            return Err(Error::Config("huber_delta must be > 0".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mean Huber loss: 0.5 r^2 below delta, delta(|r| - 0.5 delta) above,
/// with r = target - pred.
pub fn huber_loss<S: Scalar>(pred: &[S], target: &[S], delta: S) -> Result<S> {
    if delta <= S::zero() {
        return Err(Error::InvalidArgument("huber delta must be > 0".into()));
    }
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "huber: {} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    let half = S::from_f64(0.5);
    let mut sum = S::zero();
    for (&p, &y) in pred.iter().zip(target) {
        let r = y - p;
        let a = r.abs();
        sum = sum + if a < delta {
            half * r * r
        } else {
            delta * (a - half * delta)
        };
    }
    Ok(sum / S::from_f64(pred.len() as f64))
}

/// Gradient of [`huber_loss`] with respect to the predictions:
/// per element -r when |r| < delta, else -delta*sign(r), divided by N.
pub fn huber_grad<S: Scalar>(pred: &[S], target: &[S], delta: S) -> Result<Vec<S>> {
    if delta <= S::zero() {
        return Err(Error::InvalidArgument("huber delta must be > 0".into()));
    }
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::ShapeMismatch("huber grad: length mismatch".into()));
    }
    let n = S::from_f64(pred.len() as f64);
    Ok(pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let r = y - p;
            let g = if r.abs() < delta {
                -r
            } else {
                -delta * r.signum()
            };
            g / n
        })
        .collect())
}

/// Per-parameter first and second moment estimates.
pub struct AdamState<S: Scalar> {
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
    step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &ParameterSet<S>) -> Self {
        let shapes: Vec<usize> = params.learnable().iter().map(|a| a.len()).collect();
        Self {
            m: shapes.iter().map(|&n| vec![S::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![S::zero(); n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Standard bias-corrected Adam update, applied in place.
pub fn adam_step<S: Scalar>(
    params: &mut ParameterSet<S>,
    grads: &ParamGrads<S>,
    state: &mut AdamState<S>,
    cfg: &TrainConfig,
) -> Result<()> {
    state.step += 1;
    let b1 = S::from_f64(cfg.adam_beta1);
    let b2 = S::from_f64(cfg.adam_beta2);
    let lr = S::from_f64(cfg.learning_rate);
    let eps = S::from_f64(cfg.adam_eps);
    let t = state.step as i32;
    let bc1 = S::one() - S::from_f64(cfg.adam_beta1.powi(t));
    let bc2 = S::one() - S::from_f64(cfg.adam_beta2.powi(t));

    let mut arrays = params.learnable_mut();
    let grad_arrays = grads.arrays();
    if arrays.len() != grad_arrays.len() {
        return Err(Error::ShapeMismatch("adam: array count".into()));
    }
    for ((p, g), (m, v)) in arrays
        .iter_mut()
        .zip(&grad_arrays)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        if p.len() != g.len() {
            return Err(Error::ShapeMismatch("adam: array length".into()));
        }
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (S::one() - b1) * g[i];
            v[i] = b2 * v[i] + (S::one() - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainHistory {
    /// Line-delimited records, one JSON object per epoch.
    pub fn write_jsonl(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::new();
        for rec in &self.epochs {
            out.push_str(
                &serde_json::to_string(rec)
                    .map_err(|e| Error::Data(format!("history encode: {e}")))?,
            );
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Mean Huber validation loss over a window set, infer mode.
pub fn validation_loss<S: Scalar>(
    params: &ParameterSet<S>,
    cfg: &ModelConfig,
    windows: &Windows,
    batch_size: usize,
    delta: S,
) -> Result<S> {
    let mut sum = S::zero();
    let mut count = 0usize;
    let idx: Vec<usize> = (0..windows.len()).collect();
    for chunk in idx.chunks(batch_size) {
        let (x, y) = windows.batch::<S>(chunk)?;
        let f = model::forward(params, cfg, &x)?;
        let n = y.len();
        let loss = huber_loss(f.y_hat.data(), y.data(), delta)?;
        sum = sum + loss * S::from_f64(n as f64);
        count += n;
    }
    if count == 0 {
        return Err(Error::Data("validation stream is empty".into()));
    }
    Ok(sum / S::from_f64(count as f64))
}

/// Mini-batch Adam on Huber loss with early stopping; returns the
/// parameters of the best validation epoch.
pub fn train<S: Scalar>(
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    train_windows: &Windows,
    val_windows: &Windows,
) -> Result<(ParameterSet<S>, TrainHistory)> {
    cfg.validate()?;
    tcfg.validate()?;
    if train_windows.len() == 0 {
        return Err(Error::Data("training stream is empty".into()));
    }
    if val_windows.len() == 0 {
        return Err(Error::Data("validation stream is empty".into()));
    }
    let delta = S::from_f64(tcfg.huber_delta);
    let mut params: ParameterSet<S> = model::init_parameters(cfg, cfg.seed);
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);

    let mut history = TrainHistory::default();
    let mut best: Option<(ParameterSet<S>, f64, usize)> = None;
    let mut since_best = 0usize;

    for epoch in 0..tcfg.max_epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..train_windows.len()).collect();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0f64;
        let mut loss_count = 0usize;
        for (batch_idx, chunk) in order.chunks(tcfg.batch_size).enumerate() {
            let (x, y) = train_windows.batch::<S>(chunk)?;
            let tf = model::forward_train(&mut params, cfg, &x)?;
            let loss = huber_loss(tf.forecast.y_hat.data(), y.data(), delta)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, batch {batch_idx}"
                )));
            }
            let n = y.len();
            loss_sum += loss.to_f64() * n as f64;
            loss_count += n;
            let seed_data = huber_grad(tf.forecast.y_hat.data(), y.data(), delta)?;
            let (b, c, l) = tf.forecast.y_hat.shape();
            let seed = Grid3::from_vec(b, c, l, seed_data)?;
            let grads = tf.backward(seed)?;
            adam_step(&mut params, &grads, &mut state, tcfg)?;
        }
        let train_loss = loss_sum / loss_count as f64;
        let val_loss =
            validation_loss(&params, cfg, val_windows, tcfg.batch_size, delta)?.to_f64();
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds: start.elapsed().as_secs_f64(),
        });

        let improved = best.as_ref().map_or(true, |(_, b, _)| val_loss < *b);
        if improved {
            best = Some((params.clone(), val_loss, epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tcfg.patience {
                break;
            }
        }
    }

    let (best_params, _, best_epoch) = best.expect("at least one epoch ran");
    history.best_epoch = best_epoch;
    Ok((best_params, history))
}
