use serde::{Deserialize, Serialize};

use crate::error::{FptError, Result};
use crate::numerics::{sym_eig, EigenDecomposition, Matrix, RandomStream};

fn check_shapes(x: &Matrix, a: &Matrix) -> Result<()> {
    let d = x.cols();
    if a.shape() != (d, d) {
        return Err(FptError::Shape(format!("A is {:?}, expected {d}x{d} for X {:?}", a.shape(), x.shape())));
    }
    if x.rows() == 0 {
        return Err(FptError::Shape("X has no rows".into()));
    }
    Ok(())
}

/// Reconstruction loss `Σ_i ‖x_i − S A x_i‖²` with `S = XᵀX`.
///
/// `X` is centered columnwise first, so callers may pass raw tokens.
pub fn attention_objective(x: &Matrix, a: &Matrix) -> Result<f64> {
    check_shapes(x, a)?;
    let xc = x.center_columns();
    let s = xc.gram();
    let sa = s.dot(a);
    let mut total = 0.0;
    for i in 0..xc.rows() {
        let xi = xc.row(i);
        let r = sa.matvec(xi);
        total += xi.iter().zip(&r).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    }
    Ok(total)
}

/// Same quantity as [`attention_objective`] computed as
/// `tr((I − SA) S (I − SA)ᵀ)`.
pub fn attention_objective_trace(x: &Matrix, a: &Matrix) -> Result<f64> {
    check_shapes(x, a)?;
    let s = x.center_columns().gram();
    let m = Matrix::identity(s.rows()).sub(&s.dot(a));
    Ok(m.dot(&s).dot(&m.transpose()).trace())
}

/// `tr((I − SA)² S)`. Agrees with the other two forms only for symmetric `A`.
pub fn attention_objective_squared_trace(x: &Matrix, a: &Matrix) -> Result<f64> {
    check_shapes(x, a)?;
    let s = x.center_columns().gram();
    let m = Matrix::identity(s.rows()).sub(&s.dot(a));
    Ok(m.dot(&m).dot(&s).trace())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PcaAttentionSolution {
    pub a_star: Matrix,
    pub rank: usize,
    pub objective: f64,
    /// Spectrum of the centered `XᵀX`, eigenvalues descending.
    pub eigen: EigenDecomposition,
}

impl PcaAttentionSolution {
    /// Sum of the discarded eigenvalues, the closed-form optimum.
    pub fn tail_energy(&self) -> f64 {
        self.eigen.eigenvalues[self.rank..].iter().map(|l| l.max(0.0)).sum()
    }
}

/// Rank-`m` minimizer of [`attention_objective`]: the top-`m` eigenvectors
/// of `S` weighted by inverse eigenvalues.
pub fn optimal_pca_attention(x: &Matrix, m: usize) -> Result<PcaAttentionSolution> {
    let d = x.cols();
    if m == 0 || m > d {
        return Err(FptError::InvalidInput(format!("rank {m} outside 1..={d}")));
    }
    let eigen = sym_eig(&x.center_columns().gram())?;
    let lm = eigen.eigenvalues[m - 1];
    if lm <= 1e-10 {
        return Err(FptError::RankDeficient(format!("eigenvalue {m} of XᵀX is {lm:.3e}")));
    }
    let mut a_star = Matrix::zeros(d, d);
    for k in 0..m {
        let v = eigen.vector(k);
        a_star = a_star.add(&Matrix::outer(&v, &v).scale(1.0 / eigen.eigenvalues[k]));
    }
    let objective = attention_objective(x, &a_star)?;
    Ok(PcaAttentionSolution { a_star, rank: m, objective, eigen })
}

/// Gradient of the objective with respect to `A`: `−2 S Rᵀ X` with
/// residual rows `R = X − X Aᵀ S`.
fn objective_grad(xc: &Matrix, s: &Matrix, a: &Matrix) -> (f64, Matrix) {
    let r = xc.sub(&xc.dot(&a.transpose()).dot(s));
    let f = r.data().iter().map(|v| v * v).sum();
    (f, s.dot(&r.transpose()).dot(xc).scale(-2.0))
}

/// Best objective found by gradient descent over factored `A = UVᵀ` with
/// `U, V ∈ R^{D×m}`, over `restarts` random starts of `steps` iterations.
/// Each step backtracks until the objective decreases and grows the step
/// after success.
pub fn brute_force_low_rank(x: &Matrix, m: usize, restarts: usize, steps: usize, seed: u64) -> Result<f64> {
    let d = x.cols();
    if m == 0 || m > d {
        return Err(FptError::InvalidInput(format!("rank {m} outside 1..={d}")));
    }
    let xc = x.center_columns();
    let s = xc.gram();
    let scale = s.trace().max(1e-12);
    let mut best = f64::INFINITY;
    for r in 0..restarts {
        let mut rng = RandomStream::derived(seed, r as u64);
        let init = 1.0 / scale.sqrt();
        let mut u = Matrix::from_fn(d, m, |_, _| init * rng.gaussian());
        let mut v = Matrix::from_fn(d, m, |_, _| init * rng.gaussian());
        let (mut f, mut g) = objective_grad(&xc, &s, &u.dot(&v.transpose()));
        let mut lr = 1.0 / (scale * scale);
        for _ in 0..steps {
            let gu = g.dot(&v);
            let gv = g.transpose().dot(&u);
            let mut accepted = false;
            for _ in 0..40 {
                let nu = u.sub(&gu.scale(lr));
                let nv = v.sub(&gv.scale(lr));
                let (nf, ng) = objective_grad(&xc, &s, &nu.dot(&nv.transpose()));
                if nf < f {
                    u = nu;
                    v = nv;
                    f = nf;
                    g = ng;
                    lr *= 1.5;
                    accepted = true;
                    break;
                }
                lr *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        best = best.min(f);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_x(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = RandomStream::new(seed);
        Matrix::from_fn(n, d, |_, _| rng.gaussian())
    }

    /// Centered two-column data whose scatter matrix is exactly `diag(4, 1)`.
    fn diag41() -> Matrix {
        Matrix::from_rows(&[vec![2f64.sqrt(), 0.0], vec![-(2f64.sqrt()), 0.0], vec![0.0, 0.5f64.sqrt()], vec![0.0, -(0.5f64.sqrt())]])
            .unwrap()
    }

    #[test]
    fn zero_attention_gives_total_energy() {
        let x = random_x(10, 3, 1);
        let s = x.center_columns().gram();
        assert!((attention_objective(&x, &Matrix::zeros(3, 3)).unwrap() - s.trace()).abs() < 1e-10);
    }

    #[test]
    fn sum_and_trace_forms_agree() {
        for seed in 0..20 {
            let x = random_x(8, 4, seed);
            let mut rng = RandomStream::new(100 + seed);
            let a = Matrix::from_fn(4, 4, |_, _| 0.1 * rng.gaussian());
            let s = attention_objective(&x, &a).unwrap();
            let t = attention_objective_trace(&x, &a).unwrap();
            assert!((s - t).abs() <= 1e-8 * s.max(1.0), "{s} vs {t}");
            let sym = a.add(&a.transpose()).scale(0.5);
            let s = attention_objective(&x, &sym).unwrap();
            let q = attention_objective_squared_trace(&x, &sym).unwrap();
            assert!((s - q).abs() <= 1e-8 * s.max(1.0));
        }
    }

    #[test]
    fn squared_trace_form_differs_for_asymmetric_attention() {
        let x = random_x(8, 3, 4);
        let a = Matrix::from_fn(3, 3, |i, j| if i < j { 0.2 } else { 0.0 });
        let s = attention_objective(&x, &a).unwrap();
        let q = attention_objective_squared_trace(&x, &a).unwrap();
        assert!((s - q).abs() > 1e-6);
    }

    #[test]
    fn diagonal_example() {
        let x = diag41();
        let sol = optimal_pca_attention(&x, 1).unwrap();
        let want = Matrix::from_rows(&[vec![0.25, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(sol.a_star.sub(&want).max_abs() < 1e-12);
        assert!((sol.objective - 1.0).abs() < 1e-10);
        let brute = brute_force_low_rank(&x, 1, 10, 5000, 0).unwrap();
        assert!((brute - 1.0).abs() < 1e-4, "brute {brute}");
    }

    #[test]
    fn full_rank_is_exact() {
        let x = random_x(12, 4, 2);
        let sol = optimal_pca_attention(&x, 4).unwrap();
        assert!(sol.objective.abs() < 1e-8);
    }

    #[test]
    fn random_rank_two_matches_tail_and_brute_force() {
        let x = random_x(12, 4, 3);
        let sol = optimal_pca_attention(&x, 2).unwrap();
        let tail = sol.eigen.eigenvalues[2] + sol.eigen.eigenvalues[3];
        assert!((sol.objective - tail).abs() <= 1e-6 * tail.max(1.0));
        let brute = brute_force_low_rank(&x, 2, 10, 5000, 7).unwrap();
        assert!(sol.objective <= brute + 1e-4);
        assert!(sol.a_star.sub(&sol.a_star.transpose()).max_abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_and_bad_rank() {
        let x = Matrix::from_fn(6, 3, |i, j| if j == 2 { 0.0 } else { (i * (j + 1)) as f64 });
        assert!(matches!(optimal_pca_attention(&x, 3), Err(FptError::RankDeficient(_))));
        assert!(matches!(optimal_pca_attention(&x, 0), Err(FptError::InvalidInput(_))));
        assert!(matches!(attention_objective(&x, &Matrix::zeros(2, 2)), Err(FptError::Shape(_))));
    }
}
