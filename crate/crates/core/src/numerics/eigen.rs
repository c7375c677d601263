use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{FptError, Result};

const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
///
/// Column `k` of `eigenvectors` pairs with `eigenvalues[k]`. Each column has
/// unit norm and its largest-magnitude component is positive (first index
/// wins ties), which makes the decomposition reproducible.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    /// Column `k` as an owned vector.
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.eigenvectors.col(k)
    }

    /// `V diag(λ) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let v = &self.eigenvectors;
        let n = v.rows();
        Matrix::from_fn(n, n, |i, j| {
            (0..self.eigenvalues.len()).map(|k| v.get(i, k) * self.eigenvalues[k] * v.get(j, k)).sum()
        })
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps stop once the off-diagonal Frobenius norm falls below
/// `1e-12 · max(1, ‖S‖_F)`; more than 100 sweeps is reported as
/// `NumericalFailure`.
pub fn sym_eig(s: &Matrix) -> Result<EigenDecomposition> {
    if !s.is_square() {
        return Err(FptError::InvalidInput(format!(
            "sym_eig needs a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    if !s.is_finite() {
        return Err(FptError::InvalidInput("sym_eig input is not finite".into()));
    }
    let n = s.rows();
    let scale = s.max_abs().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (s.get(i, j) - s.get(j, i)).abs() > SYMMETRY_TOL * scale {
                return Err(FptError::InvalidInput(format!(
                    "sym_eig input is not symmetric at ({i},{j})"
                )));
            }
        }
    }

    // Work on the symmetrized copy so tiny asymmetries cannot bias rotations.
    let mut a = Matrix::from_fn(n, n, |i, j| 0.5 * (s.get(i, j) + s.get(j, i)));
    let mut v = Matrix::identity(n);
    let tol = OFF_DIAGONAL_TOL * s.frobenius_norm().max(1.0);

    let mut converged = n <= 1;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) < tol {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged && off_diagonal_norm(&a) >= tol {
        return Err(FptError::NumericalFailure(format!(
            "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| a.get(k, k)).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.col(src);
        fix_sign(&mut col);
        for i in 0..n {
            eigenvectors.set(i, dst, col[i]);
        }
    }
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a.get(i, j) * a.get(i, j);
            }
        }
    }
    sum.sqrt()
}

fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a.get(p, q);
    if apq == 0.0 {
        return;
    }
    let n = a.rows();
    let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // A ← Jᵀ A J with J the (p,q) plane rotation.
    for k in 0..n {
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        a.set(k, p, c * akp - s * akq);
        a.set(k, q, s * akp + c * akq);
    }
    for k in 0..n {
        let apk = a.get(p, k);
        let aqk = a.get(q, k);
        a.set(p, k, c * apk - s * aqk);
        a.set(q, k, s * apk + c * aqk);
    }
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);

    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

fn fix_sign(col: &mut [f64]) {
    let max = col.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if let Some(lead) = col.iter().position(|x| x.abs() >= max - 1e-12) {
        if col[lead] < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Largest singular value, `sqrt(λ_max(mᵀm))`.
pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    if !m.is_finite() {
        return Err(FptError::InvalidInput("spectral_norm input is not finite".into()));
    }
    if m.rows() == 0 || m.cols() == 0 {
        return Ok(0.0);
    }
    // The smaller Gram matrix has the same nonzero spectrum.
    let gram = if m.rows() < m.cols() { m.transpose().gram() } else { m.gram() };
    let eig = sym_eig(&gram)?;
    Ok(eig.eigenvalues[0].max(0.0).sqrt())
}
