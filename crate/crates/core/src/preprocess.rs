//! Reverse instance normalization and patch tokenization.

use serde::{Deserialize, Serialize};

use crate::error::{FptError, Result};
use crate::numerics::{mean_var, Matrix};

pub const DEFAULT_EPS: f64 = 1e-5;

/// Statistics captured by [`revin_normalize`] for later de-normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceStats {
    pub mean: f64,
    /// Biased standard deviation of the window.
    pub std: f64,
    pub eps: f64,
}

impl InstanceStats {
    /// Effective divisor `sqrt(std² + eps)`.
    pub fn scale(&self) -> f64 {
        (self.std * self.std + self.eps).sqrt()
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(FptError::InvalidInput(format!("eps must be finite and nonnegative, got {eps}")));
    }
    Ok(())
}

/// Standardizes one univariate window: `(x − mean) / sqrt(var + eps)`.
///
/// A window with zero effective scale (constant input with `eps = 0`) maps to
/// zeros.
pub fn revin_normalize(x: &[f64], eps: f64) -> Result<(Vec<f64>, InstanceStats)> {
    check_eps(eps)?;
    if x.is_empty() {
        return Err(FptError::InvalidInput("empty window".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FptError::InvalidInput("window contains non-finite values".into()));
    }
    let (mean, var) = mean_var(x);
    let stats = InstanceStats { mean, std: var.sqrt(), eps };
    Ok((normalize_with(x, &stats), stats))
}

/// Like [`revin_normalize`] but with statistics taken over observed entries
/// only (`observed[i] != 0`); masked entries are set to zero afterwards.
pub fn revin_normalize_observed(x: &[f64], observed: &[f64], eps: f64) -> Result<(Vec<f64>, InstanceStats)> {
    check_eps(eps)?;
    if x.len() != observed.len() {
        return Err(FptError::Shape(format!("window {} vs mask {}", x.len(), observed.len())));
    }
    let seen: Vec<f64> = x.iter().zip(observed).filter(|(_, m)| **m != 0.0).map(|(v, _)| *v).collect();
    if seen.is_empty() {
        return Err(FptError::InvalidInput("every entry of the window is masked".into()));
    }
    if seen.iter().any(|v| !v.is_finite()) {
        return Err(FptError::InvalidInput("window contains non-finite values".into()));
    }
    let (mean, var) = mean_var(&seen);
    let stats = InstanceStats { mean, std: var.sqrt(), eps };
    let mut z = normalize_with(x, &stats);
    for (zi, m) in z.iter_mut().zip(observed) {
        if *m == 0.0 {
            *zi = 0.0;
        }
    }
    Ok((z, stats))
}

fn normalize_with(x: &[f64], stats: &InstanceStats) -> Vec<f64> {
    let s = stats.scale();
    if s == 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| (v - stats.mean) / s).collect()
}

/// `y · sqrt(var + eps) + mean`.
pub fn revin_denormalize(y: &[f64], stats: &InstanceStats) -> Vec<f64> {
    let s = stats.scale();
    y.iter().map(|v| v * s + stats.mean).collect()
}

/// Patch length and stride, in timesteps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchConfig {
    pub patch_len: usize,
    pub stride: usize,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self { patch_len: 16, stride: 8 }
    }
}

impl PatchConfig {
    pub fn new(patch_len: usize, stride: usize) -> Result<Self> {
        if patch_len == 0 || stride == 0 {
            return Err(FptError::InvalidInput("patch length and stride must be positive".into()));
        }
        Ok(Self { patch_len, stride })
    }

    /// `floor((L − P) / S) + 1`, or `None` when `L < P`.
    pub fn n_patches(&self, len: usize) -> Option<usize> {
        (len >= self.patch_len).then(|| (len - self.patch_len) / self.stride + 1)
    }
}

/// Cuts a window into `n_patches × P` tokens. Trailing points that do not
/// fill a whole patch are dropped.
pub fn patchify(x: &[f64], cfg: &PatchConfig) -> Result<Matrix> {
    if cfg.patch_len == 0 || cfg.stride == 0 {
        return Err(FptError::InvalidInput("patch length and stride must be positive".into()));
    }
    let n = cfg.n_patches(x.len()).ok_or_else(|| {
        FptError::InsufficientData(format!("window of {} shorter than patch length {}", x.len(), cfg.patch_len))
    })?;
    let p = cfg.patch_len;
    let mut data = Vec::with_capacity(n * p);
    for i in 0..n {
        data.extend_from_slice(&x[i * cfg.stride..i * cfg.stride + p]);
    }
    Matrix::new(n, p, data)
}
