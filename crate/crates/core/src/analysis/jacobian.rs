use serde::{Deserialize, Serialize};

use crate::error::{FptError, Result};
use rayon::prelude::*;

use crate::numerics::{derive_seed, softmax_rows, spectral_norm, Matrix, RandomStream};

/// Largest `N·D` for which the dense finite-difference Jacobian is built.
pub const MAX_JACOBIAN_DIM: usize = 512;

const FD_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianBound {
    /// Spectral norm of the finite-difference Jacobian.
    pub lhs: f64,
    /// Bound including the additive token count.
    pub rhs: f64,
    /// The same bound without the token count.
    pub rhs_without_n: f64,
    pub holds: bool,
}

/// `softmax(X A Xᵀ) X` without scaling.
pub fn self_attention_map(x: &Matrix, a: &Matrix) -> Result<Matrix> {
    let p = softmax_rows(&x.dot(a).dot(&x.transpose()))?;
    Ok(p.dot(x))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Compares the spectral norm of the Jacobian of [`self_attention_map`]
/// (central differences, step 1e-6) with the analytic upper bound
///
/// `‖A‖ Σ_i (P_ii + ½)‖x_i − m_i‖² + N + ‖A‖ Σ_{i≠j} P_ij ‖x_j − m_i‖² + ‖A‖/2 Σ_i ‖x_i‖²`
///
/// where `P` is the attention matrix and `m_i = Σ_j P_ij x_j`. `holds`
/// tolerates a finite-difference slack of `1e-8·max(1, rhs)`.
pub fn jacobian_bound_check(x: &Matrix, a: &Matrix) -> Result<JacobianBound> {
    let (n, d) = x.shape();
    if a.shape() != (d, d) {
        return Err(FptError::Shape(format!("A is {:?}, expected {d}x{d}", a.shape())));
    }
    if n == 0 || d == 0 {
        return Err(FptError::InvalidInput("empty token matrix".into()));
    }
    if n * d > MAX_JACOBIAN_DIM {
        return Err(FptError::InvalidInput(format!("N·D = {} exceeds {MAX_JACOBIAN_DIM}", n * d)));
    }
    let nd = n * d;
    let mut jac = Matrix::zeros(nd, nd);
    let mut xp = x.clone();
    for k in 0..nd {
        let orig = xp.data()[k];
        xp.data_mut()[k] = orig + FD_STEP;
        let up = self_attention_map(&xp, a)?;
        xp.data_mut()[k] = orig - FD_STEP;
        let down = self_attention_map(&xp, a)?;
        xp.data_mut()[k] = orig;
        for r in 0..nd {
            jac.set(r, k, (up.data()[r] - down.data()[r]) / (2.0 * FD_STEP));
        }
    }
    let lhs = spectral_norm(&jac)?;

    let a_norm = spectral_norm(a)?;
    let p = softmax_rows(&x.dot(a).dot(&x.transpose()))?;
    let means = p.dot(x);
    let mut main = 0.0;
    let mut off = 0.0;
    let mut energy = 0.0;
    for i in 0..n {
        main += (p.get(i, i) + 0.5) * sq_dist(x.row(i), means.row(i));
        energy += x.row(i).iter().map(|v| v * v).sum::<f64>();
        for j in 0..n {
            if j != i {
                off += p.get(i, j) * sq_dist(x.row(j), means.row(i));
            }
        }
    }
    let rhs_without_n = a_norm * (main + off + 0.5 * energy);
    let rhs = rhs_without_n + n as f64;
    Ok(JacobianBound { lhs, rhs, rhs_without_n, holds: lhs <= rhs + 1e-8 * rhs.max(1.0) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianCase {
    pub n: usize,
    pub d: usize,
    pub a_norm: f64,
    #[serde(flatten)]
    pub bound: JacobianBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianAudit {
    pub cases: Vec<JacobianCase>,
    /// Cases where the bound with the token count holds.
    pub held: usize,
    /// Cases where the bound without the token count would also hold.
    pub held_without_n: usize,
}

impl JacobianAudit {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,d,a_norm,lhs,rhs,rhs_without_n,holds\n");
        for c in &self.cases {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.n, c.d, c.a_norm, c.bound.lhs, c.bound.rhs, c.bound.rhs_without_n, c.bound.holds
            ));
        }
        s
    }
}

/// Checks the bound on `trials` random instances. Instance `k` draws `N`
/// and `D` uniformly from the inclusive ranges, standard normal tokens, and
/// a Gaussian `A` rescaled to a spectral norm uniform in `(0, max_a_norm]`.
pub fn jacobian_audit(
    n_range: (usize, usize),
    d_range: (usize, usize),
    max_a_norm: f64,
    trials: usize,
    seed: u64,
) -> Result<JacobianAudit> {
    let ok = |(lo, hi): (usize, usize)| lo >= 1 && lo <= hi;
    if !ok(n_range) || !ok(d_range) || !(max_a_norm > 0.0) {
        return Err(FptError::InvalidInput("bad audit ranges".into()));
    }
    let cases = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = RandomStream::new(derive_seed(seed, k as u64));
            let n = n_range.0 + rng.below(n_range.1 - n_range.0 + 1);
            let d = d_range.0 + rng.below(d_range.1 - d_range.0 + 1);
            let x = Matrix::from_fn(n, d, |_, _| rng.gaussian());
            let raw = Matrix::from_fn(d, d, |_, _| rng.gaussian());
            let a_norm = max_a_norm * (1.0 - rng.uniform());
            let a = raw.scale(a_norm / spectral_norm(&raw)?.max(f64::MIN_POSITIVE));
            Ok(JacobianCase { n, d, a_norm, bound: jacobian_bound_check(&x, &a)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let held = cases.iter().filter(|c| c.bound.holds).count();
    let held_without_n = cases.iter().filter(|c| c.bound.lhs <= c.bound.rhs_without_n).count();
    Ok(JacobianAudit { cases, held, held_without_n })
}
