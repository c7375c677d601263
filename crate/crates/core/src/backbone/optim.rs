use rayon::prelude::*;

use super::model::{backward, forward_train};
use super::store::quantize;
use super::{FreezeMask, ModelConfig, ParameterStore};
use crate::error::{FptError, Result};
use crate::numerics::{derive_seed, Matrix, RandomStream};

/// Samples per gradient shard. Fixed so reductions never depend on the
/// worker count.
const SHARD: usize = 8;

/// What a sample's output is scored against.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    /// Squared error of `output · scale + shift` against `values`, averaged
    /// over entries with positive `weights` (all entries when `None`).
    Values { values: Vec<f64>, weights: Option<Vec<f64>>, scale: f64, shift: f64 },
    /// Softmax cross-entropy with the output as logits.
    Class(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub tokens: Matrix,
    pub target: Target,
}

/// Loss of one output and its gradient with respect to that output.
pub fn sample_loss(out: &[f64], target: &Target) -> Result<(f64, Vec<f64>)> {
    match target {
        Target::Values { values, weights, scale, shift } => {
            if values.len() != out.len() {
                return Err(FptError::Shape(format!("output {} vs target {}", out.len(), values.len())));
            }
            let w = |i: usize| weights.as_ref().map_or(1.0, |w| w[i]);
            if let Some(ws) = weights {
                if ws.len() != out.len() {
                    return Err(FptError::Shape(format!("output {} vs weights {}", out.len(), ws.len())));
                }
            }
            let total: f64 = (0..out.len()).map(w).sum();
            if !(total > 0.0) {
                return Err(FptError::InvalidInput("loss has no scored entries".into()));
            }
            let mut loss = 0.0;
            let mut grad = vec![0.0; out.len()];
            for i in 0..out.len() {
                let r = out[i] * scale + shift - values[i];
                loss += w(i) * r * r;
                grad[i] = 2.0 * w(i) * r * scale / total;
            }
            Ok((loss / total, grad))
        }
        Target::Class(c) => {
            if *c >= out.len() {
                return Err(FptError::InvalidInput(format!("class {c} out of range for {} logits", out.len())));
            }
            let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = out.iter().map(|v| (v - max).exp()).sum();
            let lse = max + sum.ln();
            let grad = out
                .iter()
                .enumerate()
                .map(|(i, v)| (v - lse).exp() - if i == *c { 1.0 } else { 0.0 })
                .collect();
            Ok((lse - out[*c], grad))
        }
    }
}

/// Mean loss over `batch` and the gradient of every tensor.
///
/// `seed` drives dropout (sample `i` uses a stream derived from `(seed, i)`).
/// Shards of the batch run in parallel; partial results are summed in shard
/// order, so the outcome is bit-stable for any thread count.
pub fn loss_and_grad(store: &ParameterStore, cfg: &ModelConfig, batch: &[Sample], seed: u64) -> Result<(f64, ParameterStore)> {
    if batch.is_empty() {
        return Err(FptError::InvalidInput("empty batch".into()));
    }
    let partials: Vec<Result<(f64, ParameterStore)>> = batch
        .par_chunks(SHARD)
        .enumerate()
        .map(|(shard, chunk)| {
            let mut grads = store.zeros_like();
            let mut loss = 0.0;
            for (j, sample) in chunk.iter().enumerate() {
                let idx = (shard * SHARD + j) as u64;
                let mut rng = RandomStream::new(derive_seed(seed, idx));
                let (out, cache) = forward_train(store, cfg, &sample.tokens, &mut rng)?;
                let (l, d_out) = sample_loss(&out, &sample.target)?;
                if !l.is_finite() {
                    return Err(FptError::NumericalFailure(format!(
                        "non-finite loss {l} at batch sample {idx} (max |output| {})",
                        out.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
                    )));
                }
                loss += l;
                backward(store, cfg, &cache, &d_out, &mut grads);
            }
            Ok((loss, grads))
        })
        .collect();

    let inv = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut sum = store.zeros_like();
    for part in partials {
        let (l, g) = part?;
        total += l;
        for ((_, acc), (_, t)) in sum.tensors_mut().into_iter().zip(g.tensors()) {
            acc.data.iter_mut().zip(&t.data).for_each(|(a, b)| *a += b);
        }
    }
    sum.for_each_mut(|_, t| t.data.iter_mut().for_each(|v| *v *= inv));
    if !sum.is_finite() {
        return Err(FptError::NumericalFailure("non-finite gradient".into()));
    }
    Ok((total * inv, sum))
}

/// Adam with bias correction; state covers every tensor but only trainable
/// ones are ever touched.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: ParameterStore,
    v: ParameterStore,
}

impl Adam {
    pub fn new(store: &ParameterStore, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: store.zeros_like(), v: store.zeros_like() }
    }

    /// Applies one update to the trainable tensors of `store`, then rounds
    /// them back to `f32` precision.
    pub fn apply(&mut self, store: &mut ParameterStore, grads: &ParameterStore, freeze: &FreezeMask) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let params = store.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for ((((name, p), (_, m)), (_, v)), (_, g)) in params.into_iter().zip(ms).zip(vs).zip(grads.tensors()) {
            if !freeze.is_trainable(&name) {
                continue;
            }
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m.data[i] / c1;
                let vhat = v.data[i] / c2;
                p.data[i] = quantize(p.data[i] - self.lr * mhat / (vhat.sqrt() + self.eps));
            }
        }
    }
}

/// One optimizer step on `batch`. Returns the pre-update mean loss.
pub fn backward_and_step(
    store: &mut ParameterStore,
    cfg: &ModelConfig,
    batch: &[Sample],
    optimizer: &mut Adam,
    freeze: &FreezeMask,
    seed: u64,
) -> Result<f64> {
    let (loss, grads) = loss_and_grad(store, cfg, batch, seed)?;
    optimizer.apply(store, &grads, freeze);
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{init_random, predict, BackboneConfig, IoConfig, Pooling};

    fn setup() -> (ModelConfig, ParameterStore, Vec<Sample>) {
        let cfg = ModelConfig::new(
            BackboneConfig { n_layers: 2, d_model: 8, n_heads: 2, d_ff: 16, max_tokens: 4, ..Default::default() },
            IoConfig { input_dim: 4, pooling: Pooling::Flatten { n_tokens: 3 }, out_dim: 2 },
        )
        .unwrap();
        let mut rng = RandomStream::new(1);
        let store = init_random(&cfg, &mut rng).unwrap();
        let batch = (0..20)
            .map(|_| Sample {
                tokens: Matrix::from_fn(3, 4, |_, _| rng.gaussian()),
                target: Target::Values {
                    values: vec![rng.gaussian(), rng.gaussian()],
                    weights: None,
                    scale: 1.0,
                    shift: 0.0,
                },
            })
            .collect();
        (cfg, store, batch)
    }

    #[test]
    fn frozen_tensors_stay_bit_identical() {
        let (cfg, mut store, batch) = setup();
        let before = store.clone();
        let mask = FreezeMask::fpt_default(&store);
        let mut opt = Adam::new(&store, 1e-2);
        for step in 0..10 {
            backward_and_step(&mut store, &cfg, &batch, &mut opt, &mask, step).unwrap();
        }
        for ((name, a), (_, b)) in store.tensors().into_iter().zip(before.tensors()) {
            if mask.is_trainable(&name) {
                assert_ne!(a, b, "{name} did not move");
            } else {
                assert_eq!(a.data, b.data, "{name} changed");
            }
        }
    }

    #[test]
    fn zero_learning_rate_is_noop() {
        let (cfg, mut store, batch) = setup();
        let before = store.clone();
        let mut opt = Adam::new(&store, 0.0);
        let mask = FreezeMask::all(&store);
        backward_and_step(&mut store, &cfg, &batch, &mut opt, &mask, 0).unwrap();
        assert_eq!(store, before);
    }

    #[test]
    fn training_reduces_loss() {
        let (cfg, mut store, batch) = setup();
        let mask = FreezeMask::all(&store);
        let mut opt = Adam::new(&store, 1e-2);
        let first = backward_and_step(&mut store, &cfg, &batch, &mut opt, &mask, 0).unwrap();
        let mut last = first;
        for step in 1..100 {
            last = backward_and_step(&mut store, &cfg, &batch, &mut opt, &mask, step).unwrap();
        }
        assert!(last < 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn gradient_is_thread_count_independent() {
        let (cfg, store, batch) = setup();
        let (l1, g1) = loss_and_grad(&store, &cfg, &batch, 3).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let (l2, g2) = pool.install(|| loss_and_grad(&store, &cfg, &batch, 3).unwrap());
        assert_eq!(l1.to_bits(), l2.to_bits());
        assert_eq!(g1, g2);
    }

    #[test]
    fn weighted_and_class_losses() {
        let t = Target::Values { values: vec![1.0, 5.0], weights: Some(vec![1.0, 0.0]), scale: 2.0, shift: 1.0 };
        let (l, g) = sample_loss(&[1.0, 0.0], &t).unwrap();
        assert_eq!(l, 4.0);
        assert_eq!(g, vec![8.0, 0.0]);
        let none = Target::Values { values: vec![1.0], weights: Some(vec![0.0]), scale: 1.0, shift: 0.0 };
        assert!(sample_loss(&[0.0], &none).is_err());
        let (l, g) = sample_loss(&[0.0, 0.0], &Target::Class(1)).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
        assert_eq!(g, vec![0.5, -0.5]);
    }

    #[test]
    fn dropout_only_in_training() {
        let (mut cfg, store, batch) = setup();
        cfg.backbone.dropout = 0.5;
        let a = predict(&store, &cfg, &batch[0].tokens).unwrap();
        let b = predict(&store, &cfg, &batch[0].tokens).unwrap();
        assert_eq!(a, b);
        let (la, _) = loss_and_grad(&store, &cfg, &batch, 1).unwrap();
        let (lb, _) = loss_and_grad(&store, &cfg, &batch, 2).unwrap();
        assert_ne!(la, lb);
    }
}
