use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FptError, Result};
use crate::numerics::{derive_seed, sym_eig, Matrix, RandomStream};

/// Which running quantity must fall below `eps`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SgdCriterion {
    /// Suboptimality of the uniformly averaged iterate.
    AveragedIterate,
    /// Running mean of the per-step suboptimalities. Never smaller than the
    /// averaged-iterate value because the objective is convex.
    AveragedObjective,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdRateReport {
    /// First step at which the criterion reached `eps`, if it did.
    pub steps_taken: Option<usize>,
    pub sigma_min: f64,
    pub eps: f64,
    pub criterion: SgdCriterion,
    pub final_suboptimality: f64,
    /// Radius of the Frobenius ball the iterates are projected onto.
    pub radius: f64,
}

/// Least-squares problem `min_W 1/(2N) Σ_i ‖Wᵀ g_i − y_i‖²` in sufficient
/// statistics form.
struct Quadratic {
    s: Matrix,
    w_star: Matrix,
}

impl Quadratic {
    /// `F(W) − F(W*) = ½ tr((W − W*)ᵀ S (W − W*))`. Matrix form of the
    /// inlined loop, kept as its test oracle.
    #[cfg(test)]
    fn gap(&self, w: &Matrix) -> f64 {
        let e = w.sub(&self.w_star);
        0.5 * e.transpose().dot(&self.s.dot(&e)).trace()
    }
}

fn solve(g: &Matrix, y: &Matrix) -> Result<(Quadratic, f64)> {
    let n = g.rows() as f64;
    let s = g.gram().scale(1.0 / n);
    let c = g.transpose().dot(y).scale(1.0 / n);
    let eig = sym_eig(&s)?;
    let lmax = eig.eigenvalues[0];
    let lmin = *eig.eigenvalues.last().expect("nonempty");
    if lmin <= 1e-12 * lmax.max(1.0) {
        return Err(FptError::RankDeficient(format!("smallest eigenvalue of GᵀG/N is {lmin:.3e}")));
    }
    let d = s.rows();
    let mut inv = Matrix::zeros(d, d);
    for k in 0..d {
        let v = eig.vector(k);
        inv = inv.add(&Matrix::outer(&v, &v).scale(1.0 / eig.eigenvalues[k]));
    }
    Ok((Quadratic { s, w_star: inv.dot(&c) }, lmin))
}

/// Runs single-sample SGD with step `1/(σ t)`, `σ` the smallest eigenvalue
/// of `GᵀG/N`, projecting onto a ball of twice the optimum's norm, and
/// reports the first step at which `criterion` is within `eps` of the
/// closed-form optimum.
pub fn sgd_conditioning_check(
    g: &Matrix,
    y: &Matrix,
    eps: f64,
    criterion: SgdCriterion,
    seed: u64,
    max_steps: usize,
) -> Result<SgdRateReport> {
    if g.rows() != y.rows() || g.rows() == 0 {
        return Err(FptError::Shape(format!("G is {:?} but Y is {:?}", g.shape(), y.shape())));
    }
    if !(eps > 0.0) {
        return Err(FptError::InvalidInput(format!("eps = {eps} must be positive")));
    }
    let (quad, sigma) = solve(g, y)?;
    let (n, d) = g.shape();
    let t_out = y.cols();
    let radius = (2.0 * quad.w_star.frobenius_norm()).max(1.0);
    let mut rng = RandomStream::new(seed);
    // Row-major d×T buffers; the loop runs millions of times, so it avoids
    // allocating.
    let w_star = quad.w_star.data();
    let s = quad.s.data();
    let mut w = vec![0.0; d * t_out];
    let mut avg = vec![0.0; d * t_out];
    let mut err = vec![0.0; d * t_out];
    let mut resid = vec![0.0; t_out];
    let gap = |x: &[f64], err: &mut [f64]| {
        err.iter_mut().zip(x.iter().zip(w_star)).for_each(|(e, (a, b))| *e = a - b);
        let mut total = 0.0;
        for a in 0..d {
            for b in 0..d {
                let sab = s[a * d + b];
                for k in 0..t_out {
                    total += sab * err[a * t_out + k] * err[b * t_out + k];
                }
            }
        }
        0.5 * total
    };
    let mut gap_sum = 0.0;
    let mut last = gap(&w, &mut err);
    for t in 1..=max_steps {
        let i = rng.below(n);
        let gi = g.row(i);
        for (k, r) in resid.iter_mut().enumerate() {
            *r = (0..d).map(|j| gi[j] * w[j * t_out + k]).sum::<f64>() - y.get(i, k);
        }
        let eta = 1.0 / (sigma * t as f64);
        for j in 0..d {
            for k in 0..t_out {
                w[j * t_out + k] -= eta * gi[j] * resid[k];
            }
        }
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > radius {
            w.iter_mut().for_each(|v| *v *= radius / norm);
        }
        let tf = t as f64;
        avg.iter_mut().zip(&w).for_each(|(a, v)| *a += (v - *a) / tf);
        last = match criterion {
            SgdCriterion::AveragedIterate => gap(&avg, &mut err),
            SgdCriterion::AveragedObjective => {
                gap_sum += gap(&w, &mut err);
                gap_sum / tf
            }
        };
        if last <= eps {
            return Ok(SgdRateReport { steps_taken: Some(t), sigma_min: sigma, eps, criterion, final_suboptimality: last, radius });
        }
    }
    Ok(SgdRateReport { steps_taken: None, sigma_min: sigma, eps, criterion, final_suboptimality: last, radius })
}

/// Design of a steps-versus-conditioning audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdAuditSpec {
    pub sigmas: Vec<f64>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_t")]
    pub t: usize,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Independent datasets per `sigma`; dataset `k` is shared across sigmas.
    #[serde(default = "default_datasets")]
    pub datasets: usize,
    /// SGD runs per dataset.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_n() -> usize {
    200
}
fn default_d() -> usize {
    4
}
fn default_t() -> usize {
    2
}
fn default_lambda_max() -> f64 {
    3.0
}
fn default_noise() -> f64 {
    0.3
}
fn default_eps() -> f64 {
    1e-3
}
fn default_datasets() -> usize {
    4
}
fn default_repeats() -> usize {
    4
}
fn default_max_steps() -> usize {
    50_000_000
}

impl SgdAuditSpec {
    pub fn new(sigmas: &[f64]) -> Self {
        Self {
            sigmas: sigmas.to_vec(),
            n: default_n(),
            d: default_d(),
            t: default_t(),
            lambda_max: default_lambda_max(),
            noise: default_noise(),
            eps: default_eps(),
            datasets: default_datasets(),
            repeats: default_repeats(),
            max_steps: default_max_steps(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdAuditRow {
    pub sigma_min: f64,
    /// Mean steps over every dataset and repeat.
    pub mean_steps: f64,
    pub steps_times_sigma: f64,
    /// Runs that hit `max_steps` without reaching `eps`.
    pub unfinished: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdAudit {
    pub rows: Vec<SgdAuditRow>,
    pub criterion: SgdCriterion,
}

impl SgdAudit {
    /// Measured and predicted (`sigma_a / sigma_b`) step ratios between rows
    /// `a` and `b`.
    pub fn ratio(&self, a: usize, b: usize) -> (f64, f64) {
        let (ra, rb) = (&self.rows[a], &self.rows[b]);
        (rb.mean_steps / ra.mean_steps, ra.sigma_min / rb.sigma_min)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sigma_min,mean_steps,steps_times_sigma,unfinished\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.sigma_min, r.mean_steps, r.steps_times_sigma, r.unfinished));
        }
        s
    }
}

/// Mean steps to `eps` for every `sigma`, over `datasets × repeats` runs of
/// [`sgd_conditioning_check`] with the running mean of suboptimalities as
/// the criterion. Unfinished runs count as `max_steps`.
pub fn sgd_rate_audit(spec: &SgdAuditSpec) -> Result<SgdAudit> {
    if spec.sigmas.is_empty() || spec.datasets == 0 || spec.repeats == 0 {
        return Err(FptError::InvalidInput("need sigmas, datasets and repeats".into()));
    }
    let criterion = SgdCriterion::AveragedObjective;
    let mut rows = Vec::with_capacity(spec.sigmas.len());
    for &sigma in &spec.sigmas {
        let data = (0..spec.datasets)
            .map(|k| {
                let mut rng = RandomStream::derived(spec.seed, k as u64);
                conditioned_regression(spec.n, spec.d, spec.t, sigma, spec.lambda_max, spec.noise, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let runs = (0..spec.datasets * spec.repeats)
            .into_par_iter()
            .map(|job| {
                let (g, y) = &data[job / spec.repeats];
                let seed = derive_seed(derive_seed(spec.seed, 1_000 + (job / spec.repeats) as u64), (job % spec.repeats) as u64);
                sgd_conditioning_check(g, y, spec.eps, criterion, seed, spec.max_steps).map(|r| r.steps_taken)
            })
            .collect::<Result<Vec<_>>>()?;
        let unfinished = runs.iter().filter(|r| r.is_none()).count();
        let mean_steps = runs.iter().map(|r| r.unwrap_or(spec.max_steps) as f64).sum::<f64>() / runs.len() as f64;
        rows.push(SgdAuditRow { sigma_min: sigma, mean_steps, steps_times_sigma: mean_steps * sigma, unfinished });
    }
    Ok(SgdAudit { rows, criterion })
}

/// Orthonormal columns via modified Gram-Schmidt.
fn orthonormal(n: usize, d: usize, rng: &mut RandomStream) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        for c in &cols {
            let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    Matrix::from_fn(n, d, |i, j| cols[j][i])
}

/// Regression data with `GᵀG/N` having eigenvalue `lambda_max` with
/// multiplicity `d − 1` plus a single `sigma_min`, and `Y = G W + noise`
/// with standard normal `W`.
///
/// Only the smallest eigenvalue moves with `sigma_min`, so gradient scales
/// stay comparable across a sweep. Keeping `lambda_max` well above every
/// swept `sigma_min` also keeps the large directions in the same step-size
/// regime: with steps `1/(σ t)` a direction whose curvature equals `σ`
/// settles with twice the error constant of a much stiffer one.
pub fn conditioned_regression(
    n: usize,
    d: usize,
    t: usize,
    sigma_min: f64,
    lambda_max: f64,
    noise: f64,
    rng: &mut RandomStream,
) -> Result<(Matrix, Matrix)> {
    if n < d || d == 0 || t == 0 || !(sigma_min > 0.0 && sigma_min <= lambda_max) || !(noise >= 0.0) {
        return Err(FptError::InvalidInput(format!(
            "bad regression spec n={n} d={d} t={t} sigma_min={sigma_min} lambda_max={lambda_max} noise={noise}"
        )));
    }
    let spectrum: Vec<f64> = (0..d).map(|k| if k + 1 == d { sigma_min } else { lambda_max }).collect();
    let q = orthonormal(n, d, rng);
    let r = orthonormal(d, d, rng);
    let scale: Vec<f64> = spectrum.iter().map(|s| (s * n as f64).sqrt()).collect();
    let g = Matrix::from_fn(n, d, |i, j| q.get(i, j) * scale[j]).dot(&r.transpose());
    let w = Matrix::from_fn(d, t, |_, _| rng.gaussian());
    let y = g.dot(&w).add(&Matrix::from_fn(n, t, |_, _| noise * rng.gaussian()));
    Ok((g, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_hits_requested_spectrum() {
        let (g, _) = conditioned_regression(50, 4, 2, 0.01, 1.0, 0.0, &mut RandomStream::new(1)).unwrap();
        let e = sym_eig(&g.gram().scale(1.0 / 50.0)).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-9);
        assert!((e.eigenvalues[3] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn realizable_orthonormal_case_converges() {
        let (g, y) = conditioned_regression(40, 3, 2, 1.0, 1.0, 0.0, &mut RandomStream::new(2)).unwrap();
        let (quad, sigma) = solve(&g, &y).unwrap();
        assert!((sigma - 1.0).abs() < 1e-9);
        assert!(quad.gap(&quad.w_star).abs() < 1e-12);
        let r = sgd_conditioning_check(&g, &y, 1e-3, SgdCriterion::AveragedIterate, 0, 100_000).unwrap();
        assert!(r.steps_taken.is_some());
    }

    #[test]
    fn better_conditioning_needs_fewer_steps() {
        let run = |s: f64| {
            let (g, y) = conditioned_regression(200, 4, 2, s, 3.0, 0.1, &mut RandomStream::new(3)).unwrap();
            sgd_conditioning_check(&g, &y, 1e-3, SgdCriterion::AveragedObjective, 4, 100_000_000).unwrap().steps_taken.unwrap()
        };
        assert!(run(1.0) < run(0.01));
    }

    #[test]
    fn objective_gap_matches_direct_evaluation() {
        // F(W) − F(W*) from the raw least-squares loss, against the
        // sufficient-statistics form.
        let (g, y) = conditioned_regression(30, 3, 2, 0.2, 1.0, 0.3, &mut RandomStream::new(8)).unwrap();
        let (quad, _) = solve(&g, &y).unwrap();
        let loss = |w: &Matrix| {
            let r = g.dot(w).sub(&y);
            r.data().iter().map(|v| v * v).sum::<f64>() / (2.0 * 30.0)
        };
        let w = Matrix::from_fn(3, 2, |i, j| (i as f64 - j as f64) * 0.4);
        assert!((loss(&w) - loss(&quad.w_star) - quad.gap(&w)).abs() < 1e-12);
    }

    #[test]
    fn singular_design_rejected() {
        let g = Matrix::from_fn(10, 2, |i, _| i as f64);
        let y = Matrix::zeros(10, 1);
        assert!(matches!(
            sgd_conditioning_check(&g, &y, 1e-3, SgdCriterion::AveragedIterate, 0, 10),
            Err(FptError::RankDeficient(_))
        ));
    }
}
