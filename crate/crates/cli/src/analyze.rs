//! `fpt analyze …` subcommands.

use std::path::PathBuf;

use clap::{Args, Subcommand};
use fpt_core::analysis::{
    attention_mean_convergence, brute_force_low_rank, forecast_token_similarity, jacobian_audit, maxent_closed_form,
    maxent_dual_solve, mixed_weights_similarity_sweep, optimal_pca_attention, sgd_rate_audit, HeadWeights,
    SgdAuditSpec, SweepOptions,
};
use fpt_core::backbone::{AttentionMode, MixMode};
use fpt_core::numerics::{Matrix, RandomStream};
use fpt_core::tasks::{run_forecast, synthetic_pretrain, TaskSpec};
use serde::Serialize;

use crate::{CliError, CliResult, Context, Globals, OutputDir};

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Per-layer token cosine similarity of a forecasting model on test windows.
    Similarity(SimilarityArgs),
    /// Closed-form rank-m attention for a data matrix.
    PcaAttn(PcaArgs),
    /// Randomized audit of the attention Jacobian norm bound.
    Jacobian(JacobianArgs),
    /// Convergence of attention output to the value-projected token mean.
    Convergence(ConvergenceArgs),
    /// SGD steps to a target suboptimality versus the smallest eigenvalue.
    SgdRate(SgdArgs),
    /// One-dimensional maximum-entropy dual.
    Maxent(MaxentArgs),
    /// Token similarity and test MSE as random weights are mixed in.
    MixSweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimilarityArgs {
    /// Test windows profiled.
    #[arg(long, default_value_t = 16)]
    pub eval_batch: usize,
    /// Replace attention by projection onto this many principal directions.
    #[arg(long)]
    pub pca_m: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PcaArgs {
    /// CSV with a header row and one numeric token per row.
    #[arg(long, value_name = "PATH")]
    pub x: PathBuf,
    #[arg(long)]
    pub m: usize,
    /// Also run the factored gradient-descent search.
    #[arg(long)]
    pub brute_force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct JacobianArgs {
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Largest spectral norm of the sampled attention matrices.
    #[arg(long, default_value_t = 1.0)]
    pub max_a_norm: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ConvergenceArgs {
    #[arg(long, default_value_t = 8)]
    pub d: usize,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, value_delimiter = ',', default_value = "16,64,256,1024")]
    pub n_grid: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SgdArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,0.1,0.01")]
    pub sigmas: Vec<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub d: usize,
    #[arg(long, default_value_t = 2)]
    pub t: usize,
    #[arg(long, default_value_t = 3.0)]
    pub lambda_max: f64,
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
    #[arg(long, default_value_t = 4)]
    pub datasets: usize,
    #[arg(long, default_value_t = 4)]
    pub repeats: usize,
    #[arg(long, default_value_t = 50_000_000)]
    pub max_steps: usize,
}

#[derive(Debug, Clone, Args)]
pub struct MaxentArgs {
    #[arg(long)]
    pub q: f64,
    #[arg(long)]
    pub g: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub finetune_epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub eval_batch: usize,
    /// Blend values linearly instead of replacing entries.
    #[arg(long)]
    pub interpolate: bool,
    /// Pretrain a donor backbone on a synthetic corpus instead of loading weights.
    #[arg(long)]
    pub synthetic_pretrain: bool,
}

/// Output directory for analyses that do not read a config; absent means
/// print only.
fn plain_output(g: &Globals) -> CliResult<Option<OutputDir>> {
    g.output.clone().map(|d| OutputDir::new(d, g.overwrite)).transpose()
}

fn emit<T: Serialize>(out: &Option<OutputDir>, stem: &str, value: &T, csv: Option<String>) -> CliResult<()> {
    if let Some(o) = out {
        o.write_json(&format!("{stem}.json"), value)?;
        if let Some(c) = csv {
            o.write(&format!("{stem}.csv"), &c)?;
        }
    }
    Ok(())
}

fn read_matrix(path: &PathBuf) -> CliResult<Matrix> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|_| CliError::config(format!("{}: bad number {f:?}", path.display()))))
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::config(format!("{}: no rows", path.display())));
    }
    Matrix::from_rows(&rows).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn forecast_horizon(ctx: &Context) -> CliResult<usize> {
    match ctx.config.task {
        TaskSpec::Forecast { horizon } => Ok(horizon),
        _ => Err(CliError::config("this analysis needs a forecast task in the config")),
    }
}

pub fn run(cmd: &AnalyzeCommand, g: &Globals) -> CliResult<()> {
    let seed = g.seed.unwrap_or(0);
    match cmd {
        AnalyzeCommand::Maxent(a) => {
            let out = plain_output(g)?;
            if !(a.q > 0.0 && a.q < 1.0 && a.g > 0.0 && a.g < 1.0) {
                return Err(CliError::config(format!("need 0 < q, g < 1, got q={} g={}", a.q, a.g)));
            }
            let lambda = maxent_dual_solve(a.q, a.g).map_err(CliError::analysis)?;
            let closed = maxent_closed_form(a.q, a.g);
            println!("lambda_star: {lambda}\nclosed_form: {closed}");
            #[derive(Serialize)]
            struct R {
                q: f64,
                g: f64,
                lambda_star: f64,
                closed_form: f64,
            }
            let r = R { q: a.q, g: a.g, lambda_star: lambda, closed_form: closed };
            emit(&out, "maxent", &r, Some(format!("q,g,lambda_star,closed_form\n{},{},{lambda},{closed}\n", a.q, a.g)))
        }
        AnalyzeCommand::PcaAttn(a) => {
            let out = plain_output(g)?;
            let x = read_matrix(&a.x)?;
            let sol = optimal_pca_attention(&x, a.m).map_err(CliError::analysis)?;
            let tail = sol.tail_energy();
            println!("objective: {}\ntail_eigenvalue_sum: {tail}", sol.objective);
            let brute = if a.brute_force {
                let b = brute_force_low_rank(&x, a.m, 10, 5000, seed).map_err(CliError::analysis)?;
                println!("brute_force_objective: {b}");
                Some(b)
            } else {
                None
            };
            #[derive(Serialize)]
            struct R<'a> {
                #[serde(flatten)]
                solution: &'a fpt_core::analysis::PcaAttentionSolution,
                tail_eigenvalue_sum: f64,
                brute_force_objective: Option<f64>,
            }
            let mut csv = String::from("k,eigenvalue\n");
            for (k, l) in sol.eigen.eigenvalues.iter().enumerate() {
                csv.push_str(&format!("{},{l}\n", k + 1));
            }
            emit(&out, "pca_attention", &R { solution: &sol, tail_eigenvalue_sum: tail, brute_force_objective: brute }, Some(csv))
        }
        AnalyzeCommand::Jacobian(a) => {
            let out = plain_output(g)?;
            let audit = jacobian_audit((a.n, a.n), (a.d, a.d), a.max_a_norm, a.trials, seed).map_err(CliError::analysis)?;
            println!("holds: {}/{}", audit.held, audit.cases.len());
            println!("holds_without_n: {}/{}", audit.held_without_n, audit.cases.len());
            emit(&out, "jacobian", &audit, Some(audit.to_csv()))
        }
        AnalyzeCommand::Convergence(a) => {
            let out = plain_output(g)?;
            if a.d == 0 {
                return Err(CliError::config("d must be positive"));
            }
            let mut rng = RandomStream::new(seed);
            let scale = 1.0 / (a.d as f64).sqrt();
            let mut m = || Matrix::from_fn(a.d, a.d, |_, _| scale * rng.gaussian());
            let w = HeadWeights { query: m(), key: m(), value: m() };
            let mu: Vec<f64> = (0..a.d).map(|_| rng.gaussian()).collect();
            let r = attention_mean_convergence(&mu, a.sigma, &w, &a.n_grid, a.trials, seed).map_err(CliError::analysis)?;
            print!("{}", r.to_csv());
            match r.slope {
                Some(s) => println!("slope: {s}"),
                None => println!("slope: undefined (no positive errors)"),
            }
            emit(&out, "convergence", &r, Some(r.to_csv()))
        }
        AnalyzeCommand::SgdRate(a) => {
            let out = plain_output(g)?;
            let spec = SgdAuditSpec {
                sigmas: a.sigmas.clone(),
                n: a.n,
                d: a.d,
                t: a.t,
                lambda_max: a.lambda_max,
                noise: a.noise,
                eps: a.eps,
                datasets: a.datasets,
                repeats: a.repeats,
                max_steps: a.max_steps,
                seed,
            };
            let audit = sgd_rate_audit(&spec).map_err(CliError::analysis)?;
            print!("{}", audit.to_csv());
            for k in 1..audit.rows.len() {
                let (measured, predicted) = audit.ratio(k - 1, k);
                println!("ratio {}->{}: measured {measured:.2}, predicted {predicted:.2}", audit.rows[k - 1].sigma_min, audit.rows[k].sigma_min);
            }
            emit(&out, "sgd_rate", &audit, Some(audit.to_csv()))
        }
        AnalyzeCommand::Similarity(a) => {
            let ctx = Context::load(g)?;
            let horizon = forecast_horizon(&ctx)?;
            let ds = ctx.dataset()?;
            let store = match ctx.weights_for(&ctx.config.task)? {
                Some(w) => w,
                None => run_forecast(&ds, &ctx.setup, horizon, None)?.store,
            };
            let mode = a.pca_m.map_or(AttentionMode::Softmax, |m| AttentionMode::Pca { m });
            let p = forecast_token_similarity(&store, &ds, &ctx.setup, horizon, a.eval_batch, mode).map_err(CliError::analysis)?;
            print!("{}", p.to_csv());
            ctx.out.write_json("similarity.json", &p)?;
            ctx.out.write("similarity.csv", &p.to_csv())?;
            Ok(())
        }
        AnalyzeCommand::MixSweep(a) => {
            let ctx = Context::load(g)?;
            let horizon = forecast_horizon(&ctx)?;
            let ds = ctx.dataset()?;
            let weights = if a.synthetic_pretrain {
                let donor = ctx.config.ablation.clone().unwrap_or_default().donor;
                Some(synthetic_pretrain(&ctx.setup, horizon, &donor)?)
            } else {
                ctx.weights_for(&ctx.config.task)?
            };
            let opts = SweepOptions {
                finetune_epochs: a.finetune_epochs,
                eval_batch: a.eval_batch,
                mix_mode: if a.interpolate { MixMode::Interpolate } else { MixMode::Replace },
                attention: AttentionMode::Softmax,
            };
            // Missing weights is a configuration problem, not a numerical one.
            let table = mixed_weights_similarity_sweep(weights.as_ref(), &ds, &ctx.setup, horizon, &a.ratios, &opts)
                .map_err(|e| match e {
                    fpt_core::FptError::MissingWeights(_) => CliError::from(e),
                    other => CliError::analysis(other),
                })?;
            print!("{}", table.to_csv());
            ctx.out.write_json("mix_sweep.json", &table)?;
            ctx.out.write("mix_sweep.csv", &table.to_csv())?;
            Ok(())
        }
    }
}
