use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{evaluate, mean_loss, Gradients, Mode, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::states::{item_rng, LabeledSample, PauliCoefficients};

/// `lr0 * 0.5^floor(epoch / period)` for a zero-based epoch index.
pub fn lr_at_epoch(lr0: f64, period: usize, epoch: usize) -> f64 {
    lr0 * 0.5f64.powi((epoch / period) as i32)
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(model: &mut Model) -> Self {
        let shapes: Vec<usize> = model.params_mut().iter().map(|p| p.len()).collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One bias-corrected update. Tensor 0 (the kernels) is skipped when frozen.
    pub fn step(&mut self, model: &mut Model, grads: &Gradients, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let frozen = !model.config.kernels_trainable;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (t, param) in model.params_mut().into_iter().enumerate() {
            if t == 0 && frozen {
                continue;
            }
            let (m, v, g) = (&mut self.m[t], &mut self.v[t], &grads.0[t]);
            for i in 0..param.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                param[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// One-based epoch number.
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Seeded 70/10/20 train/validation/test split.
#[derive(Clone, Debug)]
pub struct Split {
    pub train: Vec<LabeledSample>,
    pub val: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
}

pub fn split_dataset(samples: &[LabeledSample], seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut item_rng(seed, u64::MAX - 1));
    let n = samples.len();
    let n_train = n * 7 / 10;
    let n_val = n / 10;
    let pick = |r: &[usize]| r.iter().map(|&i| samples[i]).collect::<Vec<_>>();
    Split {
        train: pick(&idx[..n_train]),
        val: pick(&idx[n_train..n_train + n_val]),
        test: pick(&idx[n_train + n_val..]),
    }
}

/// Trains and returns the best-validation-accuracy model with its history.
pub fn train(config: &ModelConfig, train_set: &[LabeledSample], val_set: &[LabeledSample]) -> Result<(Model, Vec<EpochRecord>)> {
    let mut history = Vec::new();
    let model = train_with_history(config, train_set, val_set, &mut history)?;
    Ok((model, history))
}

/// Like [`train`], but appends to a caller-owned history so that partial
/// progress survives a non-finite loss abort.
pub fn train_with_history(
    config: &ModelConfig,
    train_set: &[LabeledSample],
    val_set: &[LabeledSample],
    history: &mut Vec<EpochRecord>,
) -> Result<Model> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument("training and validation sets must be non-empty".into()));
    }
    let mut model = Model::new(config.clone())?;
    let mut adam = Adam::new(&mut model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffle_rng = item_rng(config.seed, 1);
    let mut best: Option<(f64, Model)> = None;
    let min_batch = if config.batchnorm { 2 } else { 1 };

    let val_targets: Vec<f64> = val_set.iter().map(|s| s.target()).collect();
    for epoch in 0..config.epochs {
        let lr = lr_at_epoch(config.learning_rate, config.lr_halving_period, epoch);
        order.shuffle(&mut shuffle_rng);
        let (mut loss_sum, mut seen, mut correct) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < min_batch {
                continue;
            }
            let coeffs: Vec<PauliCoefficients> = chunk.iter().map(|&i| train_set[i].coeffs).collect();
            let targets: Vec<f64> = chunk.iter().map(|&i| train_set[i].target()).collect();
            let cache = model.forward_cached(&coeffs, Mode::Train);
            let loss = mean_loss(&cache.probs, &targets);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    last_finite: history.last().map(|r| r.epoch),
                });
            }
            let grads = model.backward(&cache, &targets);
            adam.step(&mut model, &grads, lr);
            model.update_running_stats(&cache);
            loss_sum += loss * chunk.len() as f64;
            seen += chunk.len();
            correct += cache
                .probs
                .iter()
                .zip(&targets)
                .filter(|(&p, &y)| (p >= 0.5) == (y == 1.0))
                .count();
        }
        let val_probs = model.predict(val_set);
        let val_loss = mean_loss(&val_probs, &val_targets);
        let val_accuracy = evaluate(&model, val_set).accuracy;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: epoch + 1,
                last_finite: history.last().map(|r| r.epoch),
            });
        }
        history.push(EpochRecord {
            epoch: epoch + 1,
            learning_rate: lr,
            train_loss: loss_sum / seen.max(1) as f64,
            train_accuracy: correct as f64 / seen.max(1) as f64,
            val_loss,
            val_accuracy,
        });
        if best.as_ref().is_none_or(|(acc, _)| val_accuracy > *acc) {
            best = Some((val_accuracy, model.clone()));
        }
    }
    Ok(best.map(|(_, m)| m).unwrap_or(model))
}
