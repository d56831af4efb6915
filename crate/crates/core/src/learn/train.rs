//! Residual-model training: windowed sequences, z-score normalization from
//! the training split, Adam updates with global-norm gradient clipping.
//!
//! Training is deterministic for a fixed seed: batch order comes from a
//! seeded shuffle, per-window gradients are folded in window order whether
//! or not they were computed in parallel, and the epoch loss is evaluated
//! on the full training set after each epoch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lstm::{lstm_loss, LstmGradients, LstmModel, Normalization, STD_FLOOR};
use super::{LearnError, TrainingSample, INPUT_CHANNELS, OUTPUT_DIM};

/// Training hyperparameters. Defaults follow the reference configuration:
/// 200 hidden units, 100 epochs, 15-minute delay; the optimizer settings
/// are stability-oriented choices echoed into every model file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    /// Feature cadence (s); must match the track cadence.
    pub tau_s: f64,
    /// Truncated-backpropagation window length in steps.
    pub truncation_steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub rng_seed: u64,
    pub grad_clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 200,
            epochs: 100,
            tau_s: 900.0,
            truncation_steps: 192,
            learning_rate: 1e-3,
            batch_size: 32,
            rng_seed: 0,
            grad_clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let positive = [
            ("hidden", self.hidden as f64),
            ("epochs", self.epochs as f64),
            ("tau_s", self.tau_s),
            ("truncation_steps", self.truncation_steps as f64),
            ("learning_rate", self.learning_rate),
            ("batch_size", self.batch_size as f64),
            ("grad_clip_norm", self.grad_clip_norm),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(LearnError::Model(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// A trained model plus its per-epoch training loss.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LstmModel,
    pub epoch_loss: Vec<f64>,
}

/// Per-channel statistics over every step of the training windows. Constant
/// channels get a floored standard deviation (with a warning) so the
/// normalization stays invertible.
pub fn fit_normalization(samples: &[TrainingSample]) -> Result<Normalization, LearnError> {
    let mut n = 0usize;
    let mut mean_in = [0.0; INPUT_CHANNELS];
    let mut mean_tg = [0.0; OUTPUT_DIM];
    for s in samples {
        for (xi, tg) in s.features.iter().zip(&s.targets) {
            let ch = xi.channels();
            for k in 0..INPUT_CHANNELS {
                mean_in[k] += ch[k];
            }
            mean_tg[0] += tg.x;
            mean_tg[1] += tg.y;
            n += 1;
        }
    }
    if n == 0 {
        return Err(LearnError::EmptyTrainingSet);
    }
    let nf = n as f64;
    mean_in.iter_mut().for_each(|m| *m /= nf);
    mean_tg.iter_mut().for_each(|m| *m /= nf);
    let mut var_in = [0.0; INPUT_CHANNELS];
    let mut var_tg = [0.0; OUTPUT_DIM];
    for s in samples {
        for (xi, tg) in s.features.iter().zip(&s.targets) {
            let ch = xi.channels();
            for k in 0..INPUT_CHANNELS {
                var_in[k] += (ch[k] - mean_in[k]).powi(2);
            }
            var_tg[0] += (tg.x - mean_tg[0]).powi(2);
            var_tg[1] += (tg.y - mean_tg[1]).powi(2);
        }
    }
    let floor_std = |v: f64, what: &str, k: usize| {
        let s = (v / nf).sqrt();
        if s < STD_FLOOR {
            log::warn!("{what} channel {k} is (nearly) constant; flooring std at {STD_FLOOR}");
            STD_FLOOR
        } else {
            s
        }
    };
    Ok(Normalization {
        input_mean: mean_in,
        input_std: std::array::from_fn(|k| floor_std(var_in[k], "feature", k)),
        target_mean: mean_tg,
        target_std: std::array::from_fn(|k| floor_std(var_tg[k], "target", k)),
    })
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - Self::BETA1.powi(self.t as i32);
        let b2t = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grads[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grads[i] * grads[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= self.lr * mhat / (vhat.sqrt() + Self::EPS);
        }
    }
}

/// Batch gradients with optional parallel evaluation across windows; the
/// reduction order is fixed by window index either way.
fn batch_gradients(
    model: &LstmModel,
    batch: &[&TrainingSample],
    parallel: bool,
) -> Result<(Vec<f64>, f64), LearnError> {
    let per_sample: Vec<(LstmGradients, f64, usize)> = if parallel {
        batch
            .par_iter()
            .map(|s| super::lstm::bptt_sample(model, s))
            .collect()
    } else {
        batch.iter().map(|s| super::lstm::bptt_sample(model, s)).collect()
    };
    let mut flat = vec![0.0; model.num_params()];
    let mut loss = 0.0;
    let mut steps = 0usize;
    for (g, l, n) in &per_sample {
        let gf = g.flatten();
        for (a, b) in flat.iter_mut().zip(&gf) {
            *a += b;
        }
        loss += l;
        steps += n;
    }
    if steps == 0 {
        return Err(LearnError::EmptyBatch);
    }
    let scale = 1.0 / (steps * OUTPUT_DIM) as f64;
    flat.iter_mut().for_each(|v| *v *= scale);
    Ok((flat, loss * scale))
}

/// Train a fresh model on prepared windows.
pub fn train_on_samples(
    samples: &[TrainingSample],
    cfg: &TrainConfig,
    parallel: bool,
) -> Result<TrainOutcome, LearnError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(LearnError::EmptyTrainingSet);
    }
    let norm = fit_normalization(samples)?;
    let mut model = LstmModel::init(cfg.hidden, cfg.rng_seed, norm);
    let mut params = model.flatten();
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainingSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (mut grads, _) = batch_gradients(&model, &batch, parallel)?;
            let norm2: f64 = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm2 > cfg.grad_clip_norm {
                let s = cfg.grad_clip_norm / norm2;
                grads.iter_mut().for_each(|g| *g *= s);
            }
            adam.step(&mut params, &grads);
            model.unflatten(&params);
        }
        epoch_loss.push(lstm_loss(&model, samples)?);
    }
    Ok(TrainOutcome { model, epoch_loss })
}
