//! Dense linear algebra, differentiation and randomness primitives.
//!
//! Everything here works in `f64`. Backbone weights are kept at `f32`
//! precision but are promoted before reaching these routines.

mod diff;
mod eigen;
mod matrix;
mod rng;

pub use diff::finite_diff_grad;
pub use eigen::{spectral_norm, sym_eig, EigenDecomposition};
pub use matrix::{matmul_acc, matmul_nt_acc, matmul_tn_acc, Matrix};
pub use rng::{derive_seed, seeded_rng, RandomStream};

use crate::error::{FptError, Result};

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(m: &Matrix) -> Result<Matrix> {
    if !m.is_finite() {
        return Err(FptError::InvalidInput("softmax input is not finite".into()));
    }
    let mut out = m.clone();
    for i in 0..m.rows() {
        softmax_in_place(out.row_mut(i));
    }
    Ok(out)
}

/// In-place softmax of one row. Entries equal to `-inf` (masked) get zero.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `gamma ⊙ (v − mean) / sqrt(var + eps) + beta` with the biased variance.
pub fn layer_norm(v: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Result<Vec<f64>> {
    if gamma.len() != v.len() || beta.len() != v.len() {
        return Err(FptError::Shape(format!(
            "layer_norm lengths differ: v={}, gamma={}, beta={}",
            v.len(),
            gamma.len(),
            beta.len()
        )));
    }
    if v.is_empty() {
        return Err(FptError::InvalidInput("layer_norm of an empty vector".into()));
    }
    if !(eps >= 0.0) {
        return Err(FptError::InvalidInput(format!("eps must be nonnegative, got {eps}")));
    }
    let (mean, var) = mean_var(v);
    let denom = (var + eps).sqrt();
    if denom == 0.0 {
        return Err(FptError::InvalidInput("zero variance with eps = 0".into()));
    }
    Ok(v.iter()
        .zip(gamma.iter().zip(beta))
        .map(|(x, (g, b))| g * (x - mean) / denom + b)
        .collect())
}

/// Mean and biased variance.
pub fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}
