use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FptError, Result};
use crate::numerics::{derive_seed, softmax_rows, Matrix, RandomStream};

/// Mean error at one context length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub n: usize,
    pub mean_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub points: Vec<ConvergencePoint>,
    /// Least-squares slope of `ln error` against `ln n`; `None` when fewer
    /// than two points have a positive error.
    pub slope: Option<f64>,
    pub trials: usize,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,mean_error,log_n,log_error\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{},{}\n", p.n, p.mean_error, (p.n as f64).ln(), p.mean_error.ln()));
        }
        s
    }
}

/// Projection weights for one attention head.
#[derive(Clone, Debug)]
pub struct HeadWeights {
    pub query: Matrix,
    pub key: Matrix,
    pub value: Matrix,
}

fn one_trial(mu: &[f64], sigma: f64, w: &HeadWeights, target: &[f64], n: usize, seed: u64) -> Result<f64> {
    let d = mu.len();
    let mut rng = RandomStream::new(seed);
    let sd = sigma / (d as f64).sqrt();
    let x = Matrix::from_fn(n, d, |_, j| mu[j] + sd * rng.gaussian());
    let q = Matrix::row_vector(x.row(0)).dot(&w.query);
    let k = x.dot(&w.key);
    let scores = q.dot(&k.transpose()).scale(1.0 / (d as f64).sqrt());
    let out = softmax_rows(&scores)?.dot(&x.dot(&w.value));
    Ok(out.row(0).iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// Draws `n` tokens from `N(μ, σ²/d·I)`, attends from the first token, and
/// measures how far the output lies from `μ W_v` in the max norm. Errors are
/// averaged over `trials` independent draws per context length.
pub fn attention_mean_convergence(
    mu: &[f64],
    sigma: f64,
    weights: &HeadWeights,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    let d = mu.len();
    if d == 0 || weights.query.rows() != d || weights.key.rows() != d || weights.value.rows() != d {
        return Err(FptError::Shape(format!("projections must have {d} rows")));
    }
    if weights.query.cols() != weights.key.cols() {
        return Err(FptError::Shape("query and key widths differ".into()));
    }
    let lo = n_grid.iter().copied().min().unwrap_or(0);
    let hi = n_grid.iter().copied().max().unwrap_or(0);
    if n_grid.len() < 3 || lo == 0 || hi < 10 * lo {
        return Err(FptError::InvalidInput("need at least 3 context lengths spanning a decade".into()));
    }
    if trials == 0 || !(sigma >= 0.0) {
        return Err(FptError::InvalidInput("need trials > 0 and sigma >= 0".into()));
    }
    let target = Matrix::row_vector(mu).dot(&weights.value).into_data();
    let mut points = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let base = derive_seed(seed, n as u64);
        let errs = (0..trials)
            .into_par_iter()
            .map(|t| one_trial(mu, sigma, weights, &target, n, derive_seed(base, t as u64)))
            .collect::<Result<Vec<f64>>>()?;
        points.push(ConvergencePoint { n, mean_error: errs.iter().sum::<f64>() / trials as f64 });
    }
    let pos: Vec<&ConvergencePoint> = points.iter().filter(|p| p.mean_error > 0.0).collect();
    let slope = (pos.len() >= 2).then(|| {
        let xs: Vec<f64> = pos.iter().map(|p| (p.n as f64).ln()).collect();
        let ys: Vec<f64> = pos.iter().map(|p| p.mean_error.ln()).collect();
        ols_slope(&xs, &ys)
    });
    Ok(ConvergenceReport { points, slope, trials })
}
