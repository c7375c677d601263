use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::backbone::{backward_and_step, predict, sample_loss, Adam, FreezeMask, ModelConfig, ParameterStore, Sample};
use crate::error::{FptError, Result};
use crate::numerics::{derive_seed, RandomStream};

/// Loss history of one training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_train_loss: Vec<f64>,
    pub epoch_val_loss: Vec<f64>,
    /// Per-step batch losses of the first epoch.
    pub first_epoch_steps: Vec<f64>,
    /// Epoch (1-based) whose parameters were kept; 0 when no epoch ran.
    pub best_epoch: usize,
    pub steps: u64,
    pub stopped_early: bool,
}

/// Raw outputs for every sample, in order.
pub fn predict_all(store: &ParameterStore, cfg: &ModelConfig, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
    samples.par_iter().map(|s| predict(store, cfg, &s.tokens)).collect()
}

/// Mean loss over `samples` without dropout.
pub fn evaluate_loss(store: &ParameterStore, cfg: &ModelConfig, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(FptError::InvalidInput("no samples to evaluate".into()));
    }
    let outs = predict_all(store, cfg, samples)?;
    let mut total = 0.0;
    for (out, s) in outs.iter().zip(samples) {
        total += sample_loss(out, &s.target)?.0;
    }
    Ok(total / samples.len() as f64)
}

/// Mini-batch Adam over `train` with per-epoch reshuffling.
///
/// After every epoch the validation loss (training loss when `val` is empty)
/// is checked; training stops once it has not improved for
/// `early_stop_patience` epochs, and the best parameters are restored.
pub fn train_model(
    cfg: &ModelConfig,
    store: &mut ParameterStore,
    freeze: &FreezeMask,
    train: &[Sample],
    val: &[Sample],
    tc: &TrainConfig,
) -> Result<TrainLog> {
    tc.validate()?;
    freeze.validate(store)?;
    if train.is_empty() {
        return Err(FptError::InsufficientData("no training samples".into()));
    }
    let mut log = TrainLog::default();
    if tc.epochs == 0 {
        return Ok(log);
    }
    let mut opt = Adam::new(store, tc.learning_rate);
    let mut best = (f64::INFINITY, store.clone());
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..tc.epochs {
        RandomStream::derived(tc.seed, 1_000 + epoch as u64).shuffle(&mut order);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(tc.batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| train[i].clone()).collect();
            let step_seed = derive_seed(tc.seed, log.steps);
            let loss = backward_and_step(store, cfg, &batch, &mut opt, freeze, step_seed)?;
            if epoch == 0 {
                log.first_epoch_steps.push(loss);
            }
            sum += loss;
            batches += 1;
            log.steps += 1;
        }
        let train_loss = sum / batches as f64;
        let monitor = if val.is_empty() { evaluate_loss(store, cfg, train)? } else { evaluate_loss(store, cfg, val)? };
        if !monitor.is_finite() {
            return Err(FptError::NumericalFailure(format!("non-finite validation loss at epoch {}", epoch + 1)));
        }
        log.epoch_train_loss.push(train_loss);
        log.epoch_val_loss.push(monitor);
        log::info!("epoch {} train {train_loss:.6} val {monitor:.6}", epoch + 1);
        if monitor < best.0 {
            best = (monitor, store.clone());
            log.best_epoch = epoch + 1;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tc.early_stop_patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    *store = best.1;
    Ok(log)
}
