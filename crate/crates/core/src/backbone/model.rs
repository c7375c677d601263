use serde::{Deserialize, Serialize};

use super::{BlockParams, ModelConfig, ParameterStore, Pooling};
use crate::error::{FptError, Result};
use crate::numerics::{matmul_acc, matmul_nt_acc, matmul_tn_acc, softmax_in_place, sym_eig, Matrix, RandomStream};

pub const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// What the attention sublayer computes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    #[default]
    Softmax,
    /// Replace the sublayer output by the projection of the centered
    /// normalized tokens onto their top `m` principal directions.
    Pca { m: usize },
}

/// Token matrices after the embedding and after every block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrace {
    pub layers: Vec<Matrix>,
}

struct LnCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

struct BlockCache {
    ln1: LnCache,
    h1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `n_heads × n × n` attention weights.
    probs: Vec<f64>,
    ctx: Vec<f64>,
    drop1: Option<Vec<f64>>,
    ln2: LnCache,
    h2: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
    drop2: Option<Vec<f64>>,
}

/// Activations kept by a training forward pass.
pub struct Cache {
    n: usize,
    tokens: Vec<f64>,
    blocks: Vec<BlockCache>,
    lnf: LnCache,
    pooled: Vec<f64>,
}

fn layer_norm_rows(x: &[f64], n: usize, d: usize, gamma: &[f64], beta: &[f64]) -> (Vec<f64>, LnCache) {
    let mut y = vec![0.0; n * d];
    let mut xhat = vec![0.0; n * d];
    let mut rstd = vec![0.0; n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        for j in 0..d {
            let xh = (row[j] - mean) * r;
            xhat[i * d + j] = xh;
            y[i * d + j] = gamma[j] * xh + beta[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

/// Accumulates gain/shift gradients and returns the input gradient.
fn layer_norm_backward(dy: &[f64], n: usize, d: usize, c: &LnCache, gamma: &[f64], dgamma: &mut [f64], dbeta: &mut [f64]) -> Vec<f64> {
    let mut dx = vec![0.0; n * d];
    let mut dxhat = vec![0.0; d];
    for i in 0..n {
        let (mut mean_dxh, mut mean_dxh_xh) = (0.0, 0.0);
        for j in 0..d {
            let g = dy[i * d + j];
            let xh = c.xhat[i * d + j];
            dgamma[j] += g * xh;
            dbeta[j] += g;
            dxhat[j] = g * gamma[j];
            mean_dxh += dxhat[j];
            mean_dxh_xh += dxhat[j] * xh;
        }
        mean_dxh /= d as f64;
        mean_dxh_xh /= d as f64;
        for j in 0..d {
            dx[i * d + j] = c.rstd[i] * (dxhat[j] - mean_dxh - c.xhat[i * d + j] * mean_dxh_xh);
        }
    }
    dx
}

/// `x · w + b` for `x` of shape `n×k` and `w` of shape `k×m`.
fn linear(x: &[f64], n: usize, k: usize, w: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * m);
    for _ in 0..n {
        out.extend_from_slice(b);
    }
    matmul_acc(x, n, k, w, m, &mut out);
    out
}

/// Accumulates `dw += xᵀ dy`, `db += Σ dy` and returns `dy · wᵀ`.
fn linear_backward(x: &[f64], n: usize, k: usize, w: &[f64], m: usize, dy: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    matmul_tn_acc(x, n, k, dy, m, dw);
    for i in 0..n {
        for (acc, g) in db.iter_mut().zip(&dy[i * m..(i + 1) * m]) {
            *acc += g;
        }
    }
    let mut dx = vec![0.0; n * k];
    matmul_nt_acc(dy, n, m, w, k, &mut dx);
    dx
}

#[inline]
fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + 0.044715 * u * u * u)).tanh())
}

#[inline]
fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + 0.044715 * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * u * u)
}

fn check_tokens(cfg: &ModelConfig, tokens: &Matrix) -> Result<usize> {
    let n = tokens.rows();
    if n == 0 {
        return Err(FptError::InvalidInput("no input tokens".into()));
    }
    if n > cfg.backbone.max_tokens {
        return Err(FptError::InvalidInput(format!(
            "{n} tokens exceed max_tokens {}",
            cfg.backbone.max_tokens
        )));
    }
    if tokens.cols() != cfg.io.input_dim {
        return Err(FptError::Shape(format!("token width {} but input_dim {}", tokens.cols(), cfg.io.input_dim)));
    }
    if let Pooling::Flatten { n_tokens } = cfg.io.pooling {
        if n != n_tokens {
            return Err(FptError::Shape(format!("flatten head expects {n_tokens} tokens, got {n}")));
        }
    }
    Ok(n)
}

fn embed(store: &ParameterStore, cfg: &ModelConfig, tokens: &Matrix, n: usize) -> Vec<f64> {
    let d = cfg.backbone.d_model;
    let mut x = linear(tokens.data(), n, cfg.io.input_dim, &store.input_w.data, &store.input_b.data, d);
    for (xi, p) in x.iter_mut().zip(&store.pos.data[..n * d]) {
        *xi += p;
    }
    x
}

/// Multi-head scaled dot-product attention. Returns the concatenated head
/// outputs and the `n_heads × n × n` weights.
fn attention(q: &[f64], k: &[f64], v: &[f64], n: usize, d: usize, heads: usize, causal: bool) -> (Vec<f64>, Vec<f64>) {
    let hd = d / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut probs = vec![0.0; heads * n * n];
    let mut ctx = vec![0.0; n * d];
    for h in 0..heads {
        let off = h * hd;
        for i in 0..n {
            let row = &mut probs[(h * n + i) * n..(h * n + i + 1) * n];
            let qi = &q[i * d + off..i * d + off + hd];
            for (j, s) in row.iter_mut().enumerate() {
                *s = if causal && j > i {
                    f64::NEG_INFINITY
                } else {
                    qi.iter().zip(&k[j * d + off..j * d + off + hd]).map(|(a, b)| a * b).sum::<f64>() * scale
                };
            }
            softmax_in_place(row);
            let out = &mut ctx[i * d + off..i * d + off + hd];
            for (j, p) in row.iter().enumerate() {
                if *p == 0.0 {
                    continue;
                }
                for (o, vv) in out.iter_mut().zip(&v[j * d + off..j * d + off + hd]) {
                    *o += p * vv;
                }
            }
        }
    }
    (ctx, probs)
}

fn dropout_mask(len: usize, p: f64, rng: &mut RandomStream) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len).map(|_| if rng.bernoulli(p) { 0.0 } else { keep }).collect()
}

/// Centered tokens projected onto their top-`m` principal directions.
fn pca_sublayer(h: &[f64], n: usize, d: usize, m: usize) -> Result<Vec<f64>> {
    if m == 0 || m > d {
        return Err(FptError::InvalidInput(format!("PCA rank {m} must lie in 1..={d}")));
    }
    let centered = Matrix::new(n, d, h.to_vec())?.center_columns();
    let eig = sym_eig(&centered.gram())?;
    let basis = Matrix::from_fn(d, m, |i, j| eig.eigenvectors.get(i, j));
    Ok(centered.dot(&basis).dot(&basis.transpose()).into_data())
}

fn block_forward(
    p: &BlockParams,
    cfg: &ModelConfig,
    x: &mut [f64],
    n: usize,
    mode: AttentionMode,
    mut rng: Option<&mut RandomStream>,
) -> Result<Option<BlockCache>> {
    let b = &cfg.backbone;
    let d = b.d_model;
    let (h1, ln1) = layer_norm_rows(x, n, d, &p.ln1_gamma.data, &p.ln1_beta.data);
    let train = rng.is_some();
    let drop_p = if train { b.dropout } else { 0.0 };

    let (attn_out, q, k, v, probs, ctx, drop1) = match mode {
        AttentionMode::Softmax => {
            let q = linear(&h1, n, d, &p.wq.data, &p.bq.data, d);
            let k = linear(&h1, n, d, &p.wk.data, &p.bk.data, d);
            let v = linear(&h1, n, d, &p.wv.data, &p.bv.data, d);
            let (ctx, probs) = attention(&q, &k, &v, n, d, b.n_heads, b.causal);
            let mut a = linear(&ctx, n, d, &p.wo.data, &p.bo.data, d);
            let drop1 = match rng.as_deref_mut() {
                Some(r) if drop_p > 0.0 => {
                    let mask = dropout_mask(n * d, drop_p, r);
                    a.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                    Some(mask)
                }
                _ => None,
            };
            (a, q, k, v, probs, ctx, drop1)
        }
        AttentionMode::Pca { m } => {
            if train {
                return Err(FptError::InvalidInput("PCA attention is inference-only".into()));
            }
            (pca_sublayer(&h1, n, d, m)?, vec![], vec![], vec![], vec![], vec![], None)
        }
    };
    x.iter_mut().zip(&attn_out).for_each(|(xi, a)| *xi += a);

    let (h2, ln2) = layer_norm_rows(x, n, d, &p.ln2_gamma.data, &p.ln2_beta.data);
    let u = linear(&h2, n, d, &p.w1.data, &p.b1.data, b.d_ff);
    let g: Vec<f64> = u.iter().map(|v| gelu(*v)).collect();
    let mut mo = linear(&g, n, b.d_ff, &p.w2.data, &p.b2.data, d);
    let drop2 = match rng {
        Some(r) if drop_p > 0.0 => {
            let mask = dropout_mask(n * d, drop_p, r);
            mo.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
            Some(mask)
        }
        _ => None,
    };
    x.iter_mut().zip(&mo).for_each(|(xi, m)| *xi += m);

    Ok(train.then_some(BlockCache { ln1, h1, q, k, v, probs, ctx, drop1, ln2, h2, u, g, drop2 }))
}

fn pool(cfg: &ModelConfig, hf: &[f64], n: usize) -> Vec<f64> {
    let d = cfg.backbone.d_model;
    match cfg.io.pooling {
        Pooling::Flatten { .. } => hf.to_vec(),
        Pooling::MeanPool => {
            let mut p = vec![0.0; d];
            for i in 0..n {
                p.iter_mut().zip(&hf[i * d..(i + 1) * d]).for_each(|(a, v)| *a += v);
            }
            p.iter_mut().for_each(|v| *v /= n as f64);
            p
        }
    }
}

/// Runs the stack and returns the final layer-normed token matrix (the head
/// input) with the per-layer trace.
pub fn forward(store: &ParameterStore, cfg: &ModelConfig, tokens: &Matrix, mode: AttentionMode) -> Result<(Matrix, ForwardTrace)> {
    let n = check_tokens(cfg, tokens)?;
    let d = cfg.backbone.d_model;
    let mut x = embed(store, cfg, tokens, n);
    let mut layers = Vec::with_capacity(store.blocks.len() + 1);
    layers.push(Matrix::new(n, d, x.clone())?);
    for p in &store.blocks {
        block_forward(p, cfg, &mut x, n, mode, None)?;
        layers.push(Matrix::new(n, d, x.clone()).map_err(|_| non_finite("block output"))?);
    }
    let (hf, _) = layer_norm_rows(&x, n, d, &store.lnf_gamma.data, &store.lnf_beta.data);
    Ok((Matrix::new(n, d, hf).map_err(|_| non_finite("final norm"))?, ForwardTrace { layers }))
}

fn non_finite(what: &str) -> FptError {
    FptError::NumericalFailure(format!("non-finite activations in {what}"))
}

/// Output layer applied to a head-input token matrix.
pub fn apply_head(store: &ParameterStore, cfg: &ModelConfig, hf: &Matrix) -> Vec<f64> {
    let pooled = pool(cfg, hf.data(), hf.rows());
    linear(&pooled, 1, cfg.head_in(), &store.head_w.data, &store.head_b.data, cfg.io.out_dim)
}

/// Inference: tokens to task output.
pub fn predict(store: &ParameterStore, cfg: &ModelConfig, tokens: &Matrix) -> Result<Vec<f64>> {
    let (hf, _) = forward(store, cfg, tokens, AttentionMode::Softmax)?;
    Ok(apply_head(store, cfg, &hf))
}

/// Training forward pass keeping activations for [`backward`]. Dropout is
/// active when `rng` is given and the configured rate is positive.
pub fn forward_train(store: &ParameterStore, cfg: &ModelConfig, tokens: &Matrix, rng: &mut RandomStream) -> Result<(Vec<f64>, Cache)> {
    let n = check_tokens(cfg, tokens)?;
    let d = cfg.backbone.d_model;
    let mut x = embed(store, cfg, tokens, n);
    let mut blocks = Vec::with_capacity(store.blocks.len());
    for p in &store.blocks {
        let c = block_forward(p, cfg, &mut x, n, AttentionMode::Softmax, Some(&mut *rng))?;
        blocks.push(c.expect("training pass keeps a cache"));
    }
    let (hf, lnf) = layer_norm_rows(&x, n, d, &store.lnf_gamma.data, &store.lnf_beta.data);
    let pooled = pool(cfg, &hf, n);
    let out = linear(&pooled, 1, cfg.head_in(), &store.head_w.data, &store.head_b.data, cfg.io.out_dim);
    Ok((out, Cache { n, tokens: tokens.data().to_vec(), blocks, lnf, pooled }))
}

/// Reverse pass: accumulates gradients of every tensor into `grads` given
/// the gradient of the loss with respect to the output.
pub fn backward(store: &ParameterStore, cfg: &ModelConfig, cache: &Cache, d_out: &[f64], grads: &mut ParameterStore) {
    let b = &cfg.backbone;
    let (n, d) = (cache.n, b.d_model);
    let hin = cfg.head_in();
    let dpooled = linear_backward(
        &cache.pooled,
        1,
        hin,
        &store.head_w.data,
        cfg.io.out_dim,
        d_out,
        &mut grads.head_w.data,
        &mut grads.head_b.data,
    );
    let dhf = match cfg.io.pooling {
        Pooling::Flatten { .. } => dpooled,
        Pooling::MeanPool => {
            let mut g = Vec::with_capacity(n * d);
            for _ in 0..n {
                g.extend(dpooled.iter().map(|v| v / n as f64));
            }
            g
        }
    };
    let mut dx = layer_norm_backward(
        &dhf,
        n,
        d,
        &cache.lnf,
        &store.lnf_gamma.data,
        &mut grads.lnf_gamma.data,
        &mut grads.lnf_beta.data,
    );
    for (l, c) in cache.blocks.iter().enumerate().rev() {
        dx = block_backward(&store.blocks[l], &mut grads.blocks[l], cfg, c, n, dx);
    }
    matmul_tn_acc(&cache.tokens, n, cfg.io.input_dim, &dx, d, &mut grads.input_w.data);
    for i in 0..n {
        for j in 0..d {
            grads.input_b.data[j] += dx[i * d + j];
            grads.pos.data[i * d + j] += dx[i * d + j];
        }
    }
}

fn block_backward(p: &BlockParams, g: &mut BlockParams, cfg: &ModelConfig, c: &BlockCache, n: usize, dx: Vec<f64>) -> Vec<f64> {
    let b = &cfg.backbone;
    let (d, ff) = (b.d_model, b.d_ff);

    // Feed-forward branch.
    let mut dmo = dx.clone();
    if let Some(mask) = &c.drop2 {
        dmo.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
    }
    let dg = linear_backward(&c.g, n, ff, &p.w2.data, d, &dmo, &mut g.w2.data, &mut g.b2.data);
    let du: Vec<f64> = dg.iter().zip(&c.u).map(|(a, u)| a * gelu_grad(*u)).collect();
    let dh2 = linear_backward(&c.h2, n, d, &p.w1.data, ff, &du, &mut g.w1.data, &mut g.b1.data);
    let dln2 = layer_norm_backward(&dh2, n, d, &c.ln2, &p.ln2_gamma.data, &mut g.ln2_gamma.data, &mut g.ln2_beta.data);
    let dmid: Vec<f64> = dx.iter().zip(&dln2).map(|(a, b)| a + b).collect();

    // Attention branch.
    let mut da = dmid.clone();
    if let Some(mask) = &c.drop1 {
        da.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
    }
    let dctx = linear_backward(&c.ctx, n, d, &p.wo.data, d, &da, &mut g.wo.data, &mut g.bo.data);
    let (dq, dk, dv) = attention_backward(c, &dctx, n, d, b.n_heads);
    let mut dh1 = linear_backward(&c.h1, n, d, &p.wq.data, d, &dq, &mut g.wq.data, &mut g.bq.data);
    let dh1k = linear_backward(&c.h1, n, d, &p.wk.data, d, &dk, &mut g.wk.data, &mut g.bk.data);
    let dh1v = linear_backward(&c.h1, n, d, &p.wv.data, d, &dv, &mut g.wv.data, &mut g.bv.data);
    for ((a, b), c) in dh1.iter_mut().zip(&dh1k).zip(&dh1v) {
        *a += b + c;
    }
    let dln1 = layer_norm_backward(&dh1, n, d, &c.ln1, &p.ln1_gamma.data, &mut g.ln1_gamma.data, &mut g.ln1_beta.data);
    dmid.iter().zip(&dln1).map(|(a, b)| a + b).collect()
}

fn attention_backward(c: &BlockCache, dctx: &[f64], n: usize, d: usize, heads: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hd = d / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let (mut dq, mut dk, mut dv) = (vec![0.0; n * d], vec![0.0; n * d], vec![0.0; n * d]);
    let mut dp = vec![0.0; n];
    for h in 0..heads {
        let off = h * hd;
        for i in 0..n {
            let probs = &c.probs[(h * n + i) * n..(h * n + i + 1) * n];
            let dci = &dctx[i * d + off..i * d + off + hd];
            let mut dot = 0.0;
            for j in 0..n {
                let vj = &c.v[j * d + off..j * d + off + hd];
                dp[j] = dci.iter().zip(vj).map(|(a, b)| a * b).sum();
                dot += dp[j] * probs[j];
                let pij = probs[j];
                if pij != 0.0 {
                    for (t, g) in dci.iter().enumerate() {
                        dv[j * d + off + t] += pij * g;
                    }
                }
            }
            for j in 0..n {
                let ds = probs[j] * (dp[j] - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                for t in 0..hd {
                    dq[i * d + off + t] += ds * c.k[j * d + off + t];
                    dk[j * d + off + t] += ds * c.q[i * d + off + t];
                }
            }
        }
    }
    (dq, dk, dv)
}
