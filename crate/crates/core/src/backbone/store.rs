use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ModelConfig;
use crate::error::{FptError, Result};
use crate::numerics::RandomStream;

const INIT_STD: f64 = 0.02;

/// Dense row-major tensor. Values are `f64` rounded to `f32` precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        Self { shape: shape.to_vec(), data: vec![v; shape.iter().product()] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Round to the nearest `f32`.
#[inline]
pub fn quantize(v: f64) -> f64 {
    v as f32 as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    pub ln1_gamma: Tensor,
    pub ln1_beta: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub bq: Tensor,
    pub bk: Tensor,
    pub bv: Tensor,
    pub bo: Tensor,
    pub ln2_gamma: Tensor,
    pub ln2_beta: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// Every learnable tensor of the model. Linear weights are stored
/// `(in, out)` so a row vector maps as `x · W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterStore {
    pub input_w: Tensor,
    pub input_b: Tensor,
    pub pos: Tensor,
    pub blocks: Vec<BlockParams>,
    pub lnf_gamma: Tensor,
    pub lnf_beta: Tensor,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

const BLOCK_SUFFIXES: [&str; 16] = [
    "ln1.gamma",
    "ln1.beta",
    "attn.wq",
    "attn.wk",
    "attn.wv",
    "attn.wo",
    "attn.bq",
    "attn.bk",
    "attn.bv",
    "attn.bo",
    "ln2.gamma",
    "ln2.beta",
    "mlp.w1",
    "mlp.b1",
    "mlp.w2",
    "mlp.b2",
];

impl BlockParams {
    fn fields(&self) -> [&Tensor; 16] {
        [
            &self.ln1_gamma,
            &self.ln1_beta,
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
            &self.bq,
            &self.bk,
            &self.bv,
            &self.bo,
            &self.ln2_gamma,
            &self.ln2_beta,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
        ]
    }

    fn fields_mut(&mut self) -> [&mut Tensor; 16] {
        [
            &mut self.ln1_gamma,
            &mut self.ln1_beta,
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.bq,
            &mut self.bk,
            &mut self.bv,
            &mut self.bo,
            &mut self.ln2_gamma,
            &mut self.ln2_beta,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

impl ParameterStore {
    /// All-zero store with the shapes implied by `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let b = &cfg.backbone;
        let d = b.d_model;
        let block = || BlockParams {
            ln1_gamma: Tensor::zeros(&[d]),
            ln1_beta: Tensor::zeros(&[d]),
            wq: Tensor::zeros(&[d, d]),
            wk: Tensor::zeros(&[d, d]),
            wv: Tensor::zeros(&[d, d]),
            wo: Tensor::zeros(&[d, d]),
            bq: Tensor::zeros(&[d]),
            bk: Tensor::zeros(&[d]),
            bv: Tensor::zeros(&[d]),
            bo: Tensor::zeros(&[d]),
            ln2_gamma: Tensor::zeros(&[d]),
            ln2_beta: Tensor::zeros(&[d]),
            w1: Tensor::zeros(&[d, b.d_ff]),
            b1: Tensor::zeros(&[b.d_ff]),
            w2: Tensor::zeros(&[b.d_ff, d]),
            b2: Tensor::zeros(&[d]),
        };
        Self {
            input_w: Tensor::zeros(&[cfg.io.input_dim, d]),
            input_b: Tensor::zeros(&[d]),
            pos: Tensor::zeros(&[b.max_tokens, d]),
            blocks: (0..b.n_layers).map(|_| block()).collect(),
            lnf_gamma: Tensor::zeros(&[d]),
            lnf_beta: Tensor::zeros(&[d]),
            head_w: Tensor::zeros(&[cfg.head_in(), cfg.io.out_dim]),
            head_b: Tensor::zeros(&[cfg.io.out_dim]),
        }
    }

    /// Same shapes as `self`, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, t| t.data.iter_mut().for_each(|v| *v = 0.0));
        z
    }

    /// Tensors with their canonical dotted names, in container order.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("input_embedding.w".into(), &self.input_w),
            ("input_embedding.b".into(), &self.input_b),
            ("pos_embedding".into(), &self.pos),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            for (suffix, t) in BLOCK_SUFFIXES.iter().zip(b.fields()) {
                out.push((format!("blocks.{i}.{suffix}"), t));
            }
        }
        out.extend([
            ("ln_f.gamma".into(), &self.lnf_gamma),
            ("ln_f.beta".into(), &self.lnf_beta),
            ("output_head.w".into(), &self.head_w),
            ("output_head.b".into(), &self.head_b),
        ]);
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = vec![
            ("input_embedding.w".into(), &mut self.input_w),
            ("input_embedding.b".into(), &mut self.input_b),
            ("pos_embedding".into(), &mut self.pos),
        ];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            for (suffix, t) in BLOCK_SUFFIXES.iter().zip(b.fields_mut()) {
                out.push((format!("blocks.{i}.{suffix}"), t));
            }
        }
        out.extend([
            ("ln_f.gamma".into(), &mut self.lnf_gamma),
            ("ln_f.beta".into(), &mut self.lnf_beta),
            ("output_head.w".into(), &mut self.head_w),
            ("output_head.b".into(), &mut self.head_b),
        ]);
        out
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor)) {
        for (n, t) in self.tensors_mut() {
            f(&n, t);
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.tensors().into_iter().map(|(n, _)| n).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors().into_iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn n_layers(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.data.iter().all(|v| v.is_finite()))
    }

    /// Rounds every value to `f32` precision.
    pub fn quantize(&mut self) {
        self.for_each_mut(|_, t| t.data.iter_mut().for_each(|v| *v = quantize(*v)));
    }

    /// All values concatenated in canonical order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|(_, t)| t.data.iter().copied()).collect()
    }

    /// Overwrites all values from a flat vector (no rounding).
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(FptError::Shape(format!("flat vector of {} for {} parameters", flat.len(), self.n_params())));
        }
        let mut off = 0;
        self.for_each_mut(|_, t| {
            let n = t.len();
            t.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        });
        Ok(())
    }

    /// Checks names and shapes against `cfg`.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = ParameterStore::zeros(cfg);
        let (have, want) = (self.tensors(), expected.tensors());
        if have.len() != want.len() {
            return Err(FptError::Shape(format!("store has {} tensors, config implies {}", have.len(), want.len())));
        }
        for ((name, t), (_, e)) in have.iter().zip(&want) {
            if t.shape != e.shape {
                return Err(FptError::Shape(format!("{name}: expected {:?}, found {:?}", e.shape, t.shape)));
            }
        }
        Ok(())
    }

    /// SHA-256 over names, shapes and the exact bits of every value.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.tensors() {
            h.update(name.as_bytes());
            for s in &t.shape {
                h.update((*s as u64).to_le_bytes());
            }
            for v in &t.data {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Random initialization: weights `N(0, 0.02²)`, biases 0, layer-norm gain 1
/// and shift 0. Values are drawn in canonical tensor order.
pub fn init_random(cfg: &ModelConfig, rng: &mut RandomStream) -> Result<ParameterStore> {
    cfg.validate()?;
    let mut store = ParameterStore::zeros(cfg);
    store.for_each_mut(|name, t| match TensorRole::of(name) {
        TensorRole::Weight => t.data.iter_mut().for_each(|v| *v = rng.normal(0.0, INIT_STD)),
        TensorRole::Gain => t.data.iter_mut().for_each(|v| *v = 1.0),
        TensorRole::Bias => {}
    });
    store.quantize();
    Ok(store)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TensorRole {
    Weight,
    Bias,
    Gain,
}

impl TensorRole {
    fn of(name: &str) -> Self {
        let leaf = name.rsplit('.').next().unwrap_or(name);
        match leaf {
            "gamma" => TensorRole::Gain,
            "beta" | "b" | "b1" | "b2" | "bq" | "bk" | "bv" | "bo" => TensorRole::Bias,
            _ => TensorRole::Weight,
        }
    }
}

/// Whether a tensor belongs to a transformer block's attention or
/// feed-forward sublayer (the group frozen by default).
pub fn is_block_core(name: &str) -> bool {
    name.starts_with("blocks.") && (name.contains(".attn.") || name.contains(".mlp."))
}

/// The set of tensor names an optimizer may update.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeMask {
    pub trainable: BTreeSet<String>,
}

impl FreezeMask {
    /// Embeddings, layer norms and the output layer train; attention and
    /// feed-forward weights stay frozen.
    pub fn fpt_default(store: &ParameterStore) -> Self {
        Self { trainable: store.names().into_iter().filter(|n| !is_block_core(n)).collect() }
    }

    pub fn all(store: &ParameterStore) -> Self {
        Self { trainable: store.names().into_iter().collect() }
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.trainable.contains(name)
    }

    /// Rejects names that are not tensors of `store`.
    pub fn validate(&self, store: &ParameterStore) -> Result<()> {
        let names: BTreeSet<String> = store.names().into_iter().collect();
        if let Some(bad) = self.trainable.iter().find(|n| !names.contains(*n)) {
            return Err(FptError::InvalidInput(format!("freeze mask names unknown tensor {bad:?}")));
        }
        Ok(())
    }
}

/// How random parameters are blended into pretrained ones.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixMode {
    /// Each entry independently takes the random value with probability `ratio`.
    #[default]
    Replace,
    /// `(1 − ratio) · pretrained + ratio · random`.
    Interpolate,
}

/// Blends attention and feed-forward tensors of `pretrained` with `random`;
/// every other tensor is copied from `pretrained` unchanged.
pub fn mix_weights(
    pretrained: &ParameterStore,
    random: &ParameterStore,
    ratio: f64,
    mode: MixMode,
    rng: &mut RandomStream,
) -> Result<ParameterStore> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(FptError::InvalidInput(format!("mix ratio must lie in [0, 1], got {ratio}")));
    }
    let (p, r) = (pretrained.tensors(), random.tensors());
    if p.len() != r.len() {
        return Err(FptError::Shape(format!("stores hold {} and {} tensors", p.len(), r.len())));
    }
    for ((name, a), (_, b)) in p.iter().zip(&r) {
        if a.shape != b.shape {
            return Err(FptError::Shape(format!("{name}: {:?} vs {:?}", a.shape, b.shape)));
        }
    }
    let mut out = pretrained.clone();
    for ((name, t), (_, src)) in out.tensors_mut().into_iter().zip(r) {
        if !is_block_core(&name) {
            continue;
        }
        match mode {
            MixMode::Replace => {
                for (v, s) in t.data.iter_mut().zip(&src.data) {
                    if rng.bernoulli(ratio) {
                        *v = *s;
                    }
                }
            }
            MixMode::Interpolate => {
                for (v, s) in t.data.iter_mut().zip(&src.data) {
                    *v = quantize((1.0 - ratio) * *v + ratio * s);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{BackboneConfig, IoConfig, Pooling};

    fn cfg() -> ModelConfig {
        ModelConfig::new(
            BackboneConfig { n_layers: 3, d_model: 64, n_heads: 4, d_ff: 128, max_tokens: 12, ..Default::default() },
            IoConfig { input_dim: 16, pooling: Pooling::Flatten { n_tokens: 11 }, out_dim: 24 },
        )
        .unwrap()
    }

    #[test]
    fn init_shapes_and_rules() {
        let s = init_random(&cfg(), &mut RandomStream::new(1)).unwrap();
        s.check_shapes(&cfg()).unwrap();
        assert_eq!(s.get("blocks.2.mlp.w1").unwrap().shape, vec![64, 128]);
        assert_eq!(s.get("output_head.w").unwrap().shape, vec![11 * 64, 24]);
        assert!(s.get("blocks.0.ln1.gamma").unwrap().data.iter().all(|v| *v == 1.0));
        assert!(s.get("blocks.1.attn.bq").unwrap().data.iter().all(|v| *v == 0.0));
        assert_eq!(s.names().len(), 7 + 16 * 3);
        let w = &s.get("blocks.0.attn.wq").unwrap().data;
        let std = (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt();
        assert!((std - 0.02).abs() < 0.002);
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_random(&cfg(), &mut RandomStream::new(5)).unwrap();
        let b = init_random(&cfg(), &mut RandomStream::new(5)).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        let c = init_random(&cfg(), &mut RandomStream::new(6)).unwrap();
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn values_are_f32_representable() {
        let s = init_random(&cfg(), &mut RandomStream::new(2)).unwrap();
        assert!(s.to_flat().iter().all(|v| quantize(*v) == *v));
    }

    #[test]
    fn default_mask_freezes_attention_and_mlp() {
        let s = init_random(&cfg(), &mut RandomStream::new(1)).unwrap();
        let m = FreezeMask::fpt_default(&s);
        for name in s.names() {
            let frozen = name.contains(".attn.") || name.contains(".mlp.");
            assert_eq!(m.is_trainable(&name), !frozen, "{name}");
        }
        assert!(m.is_trainable("pos_embedding"));
        assert!(m.is_trainable("blocks.1.ln2.beta"));
        assert_eq!(FreezeMask::all(&s).trainable.len(), s.names().len());
    }

    #[test]
    fn mix_ratio_extremes() {
        let c = cfg();
        let p = init_random(&c, &mut RandomStream::new(1)).unwrap();
        let r = init_random(&c, &mut RandomStream::new(2)).unwrap();
        let m0 = mix_weights(&p, &r, 0.0, MixMode::Replace, &mut RandomStream::new(3)).unwrap();
        assert_eq!(m0, p);
        let m1 = mix_weights(&p, &r, 1.0, MixMode::Replace, &mut RandomStream::new(3)).unwrap();
        for ((name, a), ((_, pp), (_, rr))) in m1.tensors().into_iter().zip(p.tensors().into_iter().zip(r.tensors())) {
            if is_block_core(&name) {
                assert_eq!(a, rr, "{name}");
            } else {
                assert_eq!(a, pp, "{name}");
            }
        }
    }

    #[test]
    fn mix_replaced_fraction_matches_ratio() {
        let c = ModelConfig::new(
            BackboneConfig { n_layers: 6, d_model: 128, n_heads: 4, d_ff: 512, max_tokens: 4, ..Default::default() },
            IoConfig { input_dim: 4, pooling: Pooling::MeanPool, out_dim: 1 },
        )
        .unwrap();
        let p = ParameterStore::zeros(&c);
        let mut r = ParameterStore::zeros(&c);
        r.for_each_mut(|_, t| t.data.iter_mut().for_each(|v| *v = 1.0));
        let m = mix_weights(&p, &r, 0.5, MixMode::Replace, &mut RandomStream::new(9)).unwrap();
        let (mut replaced, mut total) = (0usize, 0usize);
        for (name, t) in m.tensors() {
            if is_block_core(&name) {
                total += t.len();
                replaced += t.data.iter().filter(|v| **v == 1.0).count();
            }
        }
        assert!(total >= 1_000_000);
        let frac = replaced as f64 / total as f64;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }

    #[test]
    fn mix_rejects_shape_mismatch() {
        let p = init_random(&cfg(), &mut RandomStream::new(1)).unwrap();
        let mut other = cfg();
        other.backbone.n_layers = 2;
        let r = init_random(&other, &mut RandomStream::new(1)).unwrap();
        assert!(matches!(
            mix_weights(&p, &r, 0.5, MixMode::Replace, &mut RandomStream::new(0)),
            Err(FptError::Shape(_))
        ));
    }
}
