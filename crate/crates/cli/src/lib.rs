//! Command-line front end: argument parsing, run configs, dispatch and
//! report writing. `main.rs` only wires this to the process.

pub mod analyze;
pub mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fpt_core::backbone::{load_weights, save_weights, ParameterStore, BLOB_FILE, MANIFEST_FILE};
use fpt_core::data::TimeSeriesDataset;
use fpt_core::metrics::MetricReport;
use fpt_core::tasks::{
    run_ablation, run_anomaly, run_classification, run_few_shot, run_forecast, run_imputation, run_zero_shot,
    synthetic_pretrain, task_model_config, Ablation, RunOutput, TaskSetup, TaskSpec,
};
use fpt_core::FptError;

pub use analyze::AnalyzeCommand;
pub use config::RunConfig;

/// Exit status for configuration, input and I/O problems.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for numerical failures during a run or analysis.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fpt", version, about = "Frozen pretrained transformer runs and attention analyses")]
pub struct Cli {
    #[command(flatten)]
    pub globals: Globals,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Globals {
    /// Run configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured training seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Directory all output files go to.
    #[arg(long, global = true, value_name = "DIR")]
    pub output: Option<PathBuf>,
    /// Weight container directory.
    #[arg(long, global = true, value_name = "PATH")]
    pub weights: Option<PathBuf>,
    /// Replace existing output files.
    #[arg(long, global = true)]
    pub overwrite: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on the configured task; writes the report and the trained weights.
    Train,
    /// Evaluate a weight container on the configured task without training.
    Eval,
    /// Imputation run (task kind "imputation").
    Impute,
    /// Classification run (task kind "classification").
    Classify,
    /// Anomaly detection run (task kind "anomaly").
    Anomaly,
    /// Forecasting on fractions of the training segment.
    Fewshot,
    /// Train on the configured dataset, evaluate on the zero-shot target.
    Zeroshot,
    /// All five initialization/freezing arms on one forecasting config.
    Ablate(AblateArgs),
    /// Attention and optimization analyses.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    /// Pretrain a donor backbone on a synthetic corpus instead of loading weights.
    #[arg(long)]
    pub synthetic_pretrain: bool,
}

/// A failure with the exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    /// Errors from an analysis routine all count as numerical.
    pub fn analysis(e: FptError) -> Self {
        Self { code: EXIT_NUMERICAL, message: format!("{}: {e}", e.kind()) }
    }
}

impl From<FptError> for CliError {
    fn from(e: FptError) -> Self {
        let code = match e {
            FptError::NumericalFailure(_) | FptError::RankDeficient(_) | FptError::DegenerateScale(_) => EXIT_NUMERICAL,
            _ => EXIT_CONFIG,
        };
        Self { code, message: format!("{}: {e}", e.kind()) }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Writes files under one directory, refusing to clobber unless allowed.
pub struct OutputDir {
    dir: PathBuf,
    overwrite: bool,
}

impl OutputDir {
    pub fn new(dir: PathBuf, overwrite: bool) -> CliResult<Self> {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir, overwrite })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn guard(&self, path: &Path) -> CliResult<()> {
        if path.exists() && !self.overwrite {
            return Err(CliError::config(format!("{} exists; pass --overwrite to replace it", path.display())));
        }
        Ok(())
    }

    pub fn write(&self, name: &str, contents: &str) -> CliResult<PathBuf> {
        let path = self.path(name);
        self.guard(&path)?;
        std::fs::write(&path, contents).map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn write_report(&self, stem: &str, report: &MetricReport) -> CliResult<()> {
        self.write(&format!("{stem}.json"), &report.to_json())?;
        self.write(&format!("{stem}.csv"), &report.to_csv())?;
        Ok(())
    }

    pub fn write_json<T: serde::Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).expect("analysis output serializes");
        self.write(name, &text)?;
        Ok(())
    }

    pub fn write_weights(&self, name: &str, store: &ParameterStore) -> CliResult<PathBuf> {
        let dir = self.path(name);
        for f in [MANIFEST_FILE, BLOB_FILE] {
            self.guard(&dir.join(f))?;
        }
        save_weights(store, &dir)?;
        Ok(dir)
    }
}

/// Everything a config-driven command needs, resolved once.
pub struct Context {
    pub config: RunConfig,
    pub setup: TaskSetup,
    pub out: OutputDir,
    pub weights_path: Option<PathBuf>,
}

impl Context {
    pub fn load(g: &Globals) -> CliResult<Self> {
        let path = g.config.as_ref().ok_or_else(|| CliError::config("this command needs --config"))?;
        let config = RunConfig::load(path)?;
        let setup = config.effective_setup(g.seed);
        let out_dir = g
            .output
            .clone()
            .or_else(|| config.output.clone())
            .ok_or_else(|| CliError::config("no output directory: pass --output or set \"output\""))?;
        let weights_path = g.weights.clone().or_else(|| config.weights.clone());
        if let Some(w) = &weights_path {
            if !w.is_dir() {
                return Err(CliError::config(format!("weight container {} does not exist", w.display())));
            }
        }
        Ok(Self { out: OutputDir::new(out_dir, g.overwrite)?, setup, weights_path, config })
    }

    pub fn dataset(&self) -> CliResult<TimeSeriesDataset> {
        Ok(self.config.dataset.load()?)
    }

    /// Loads the weight container, if any, checked against `task`'s model.
    pub fn weights_for(&self, task: &TaskSpec) -> CliResult<Option<ParameterStore>> {
        match &self.weights_path {
            None => Ok(None),
            Some(dir) => Ok(Some(load_weights(dir, &task_model_config(&self.setup, task)?)?)),
        }
    }

    fn horizon(&self) -> CliResult<usize> {
        match self.config.task {
            TaskSpec::Forecast { horizon } => Ok(horizon),
            _ => Err(CliError::config(format!("this command needs a forecast task, config has {}", self.config.task.name()))),
        }
    }
}

fn run_task(ctx: &Context, setup: &TaskSetup, weights: Option<&ParameterStore>) -> CliResult<RunOutput> {
    let ds = ctx.dataset()?;
    let out = match &ctx.config.task {
        TaskSpec::Forecast { horizon } => run_forecast(&ds, setup, *horizon, weights)?,
        TaskSpec::Imputation { ratios } => run_imputation(&ds, setup, ratios, weights)?,
        TaskSpec::Classification { n_classes } => run_classification(&ds, setup, Some(*n_classes), weights)?,
        TaskSpec::Anomaly { quantile, point_adjust } => {
            let opts = ctx.config.anomaly.clone().unwrap_or_else(|| fpt_core::tasks::AnomalyOptions {
                quantile: *quantile,
                point_adjust: *point_adjust,
                ..Default::default()
            });
            run_anomaly(&ds, setup, &opts, weights)?
        }
    };
    Ok(out)
}

fn require_kind(ctx: &Context, kind: &str) -> CliResult<()> {
    if ctx.config.task.name() != kind {
        return Err(CliError::config(format!("config task is {}, this command runs {kind}", ctx.config.task.name())));
    }
    Ok(())
}

fn print_report(report: &MetricReport) {
    print!("{}", report.to_csv());
}

fn cmd_train(ctx: &Context) -> CliResult<()> {
    let weights = ctx.weights_for(&ctx.config.task)?;
    let out = run_task(ctx, &ctx.setup, weights.as_ref())?;
    ctx.out.write_report("report", &out.report)?;
    ctx.out.write_weights("weights", &out.store)?;
    print_report(&out.report);
    Ok(())
}

fn cmd_eval(ctx: &Context) -> CliResult<()> {
    let weights = ctx
        .weights_for(&ctx.config.task)?
        .ok_or_else(|| CliError::from(FptError::MissingWeights("eval needs --weights or \"weights\"".into())))?;
    let mut setup = ctx.setup.clone();
    setup.train.epochs = 0;
    setup.train.ablation = Ablation::NoFreeze;
    let out = run_task(ctx, &setup, Some(&weights))?;
    ctx.out.write_report("report", &out.report)?;
    print_report(&out.report);
    Ok(())
}

fn cmd_single(ctx: &Context, kind: &str) -> CliResult<()> {
    require_kind(ctx, kind)?;
    let weights = ctx.weights_for(&ctx.config.task)?;
    let out = run_task(ctx, &ctx.setup, weights.as_ref())?;
    ctx.out.write_report("report", &out.report)?;
    print_report(&out.report);
    Ok(())
}

fn cmd_fewshot(ctx: &Context) -> CliResult<()> {
    let horizon = ctx.horizon()?;
    let fractions = ctx.config.few_shot.clone().unwrap_or_default().fractions;
    let weights = ctx.weights_for(&ctx.config.task)?;
    let (report, _) = run_few_shot(&ctx.dataset()?, &ctx.setup, horizon, &fractions, weights.as_ref())?;
    ctx.out.write_report("report", &report)?;
    print_report(&report);
    Ok(())
}

fn cmd_zeroshot(ctx: &Context) -> CliResult<()> {
    let horizon = ctx.horizon()?;
    let z = ctx.config.zero_shot.as_ref().ok_or_else(|| CliError::config("zeroshot needs a \"zero_shot\" section"))?;
    let weights = ctx.weights_for(&ctx.config.task)?;
    let out = run_zero_shot(&ctx.dataset()?, &z.target.load()?, &ctx.setup, horizon, z.target_shape, z.metric, weights.as_ref())?;
    ctx.out.write_report("report", &out.report)?;
    print_report(&out.report);
    Ok(())
}

fn cmd_ablate(ctx: &Context, args: &AblateArgs) -> CliResult<()> {
    let horizon = ctx.horizon()?;
    let ab = ctx.config.ablation.clone().unwrap_or_default();
    let weights = if args.synthetic_pretrain {
        log::info!("pretraining a donor backbone on {} synthetic series", ab.donor.n_series);
        Some(synthetic_pretrain(&ctx.setup, horizon, &ab.donor)?)
    } else {
        ctx.weights_for(&ctx.config.task)?
    };
    let (report, rows) = run_ablation(&ctx.dataset()?, &ctx.setup, horizon, weights.as_ref(), ab.fraction)?;
    ctx.out.write_report("report", &report)?;
    let mut table = String::from("arm,mse,mae\n");
    for r in &rows {
        table.push_str(&format!("{},{},{}\n", r.arm.label(), r.mse, r.mae));
    }
    ctx.out.write("ablation.csv", &table)?;
    print!("{table}");
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Analyze(a) => analyze::run(a, &cli.globals),
        cmd => {
            let ctx = Context::load(&cli.globals)?;
            match cmd {
                Command::Train => cmd_train(&ctx),
                Command::Eval => cmd_eval(&ctx),
                Command::Impute => cmd_single(&ctx, "imputation"),
                Command::Classify => cmd_single(&ctx, "classification"),
                Command::Anomaly => cmd_single(&ctx, "anomaly"),
                Command::Fewshot => cmd_fewshot(&ctx),
                Command::Zeroshot => cmd_zeroshot(&ctx),
                Command::Ablate(a) => cmd_ablate(&ctx, a),
                Command::Analyze(_) => unreachable!("handled above"),
            }
        }
    }
}

/// Caps rayon's worker count from `FPT_THREADS` when set.
pub fn init_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("FPT_THREADS") {
        let n: usize = v.parse().map_err(|_| CliError::config(format!("FPT_THREADS={v:?} is not a positive integer")))?;
        if n == 0 {
            return Err(CliError::config("FPT_THREADS must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    Ok(())
}
