use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::forecast::{evaluate_forecast, forecast_model_config, forecast_samples, prepare_dataset, run_forecast};
use super::train::train_model;
use super::{config_hash, TaskSetup};
use crate::backbone::{init_random, FreezeMask, ModelConfig, ParameterStore};
use crate::data::synthetic::donor_corpus;
use crate::data::{few_shot_subset, Split, TimeSeriesDataset};
use crate::error::{FptError, Result};
use crate::metrics::{self, MetricReport, MetricRow};
use crate::numerics::RandomStream;

/// Initialization and freezing combination of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Provided weights; attention and feed-forward frozen.
    #[default]
    Fpt,
    /// Provided weights; everything trainable.
    NoFreeze,
    /// Random weights; everything trainable.
    NoPretrain,
    /// Random weights; attention and feed-forward frozen.
    NoPretrainFreeze,
    /// No transformer blocks: embedding, final norm and output layer only.
    Gpt0,
}

impl Ablation {
    /// Table order.
    pub const ALL: [Ablation; 5] =
        [Ablation::Fpt, Ablation::Gpt0, Ablation::NoFreeze, Ablation::NoPretrain, Ablation::NoPretrainFreeze];

    pub fn label(self) -> &'static str {
        match self {
            Ablation::Fpt => "fpt",
            Ablation::NoFreeze => "no_freeze",
            Ablation::NoPretrain => "no_pretrain",
            Ablation::NoPretrainFreeze => "no_pretrain_freeze",
            Ablation::Gpt0 => "gpt0",
        }
    }
}

fn require_weights<'a>(arm: Ablation, cfg: &ModelConfig, weights: Option<&'a ParameterStore>) -> Result<&'a ParameterStore> {
    let w = weights.ok_or_else(|| {
        FptError::MissingWeights(format!("ablation arm {} needs a weight container", arm.label()))
    })?;
    w.check_shapes(cfg)?;
    Ok(w)
}

/// Builds the model configuration, initial parameters and freeze mask of
/// an ablation arm. `rng` is only drawn from for random initialization.
pub fn make_ablation(
    arm: Ablation,
    cfg: &ModelConfig,
    rng: &mut RandomStream,
    weights: Option<&ParameterStore>,
) -> Result<(ModelConfig, ParameterStore, FreezeMask)> {
    cfg.validate()?;
    match arm {
        Ablation::Fpt => {
            let store = require_weights(arm, cfg, weights)?.clone();
            let mask = FreezeMask::fpt_default(&store);
            Ok((cfg.clone(), store, mask))
        }
        Ablation::NoFreeze => {
            let store = require_weights(arm, cfg, weights)?.clone();
            let mask = FreezeMask::all(&store);
            Ok((cfg.clone(), store, mask))
        }
        Ablation::NoPretrain => {
            let store = init_random(cfg, rng)?;
            let mask = FreezeMask::all(&store);
            Ok((cfg.clone(), store, mask))
        }
        Ablation::NoPretrainFreeze => {
            let store = init_random(cfg, rng)?;
            let mask = FreezeMask::fpt_default(&store);
            Ok((cfg.clone(), store, mask))
        }
        Ablation::Gpt0 => {
            let mut shallow = cfg.clone();
            shallow.backbone.n_layers = 0;
            let mut store = init_random(&shallow, rng)?;
            // Keep whatever the provided weights say about the non-block tensors.
            if let Some(w) = weights {
                w.check_shapes(cfg)?;
                store.input_w = w.input_w.clone();
                store.input_b = w.input_b.clone();
                store.pos = w.pos.clone();
                store.lnf_gamma = w.lnf_gamma.clone();
                store.lnf_beta = w.lnf_beta.clone();
                store.head_w = w.head_w.clone();
                store.head_b = w.head_b.clone();
            }
            let mask = FreezeMask::all(&store);
            Ok((shallow, store, mask))
        }
    }
}

/// Synthetic corpus a donor backbone is pretrained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DonorSpec {
    #[serde(default = "default_series")]
    pub n_series: usize,
    #[serde(default = "default_length")]
    pub length: usize,
    #[serde(default = "default_donor_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_series() -> usize {
    8
}
fn default_length() -> usize {
    1500
}
fn default_donor_epochs() -> usize {
    5
}

impl Default for DonorSpec {
    fn default() -> Self {
        Self { n_series: default_series(), length: default_length(), epochs: default_donor_epochs(), seed: 0 }
    }
}

/// Trains a fully trainable, randomly initialized forecaster of the same
/// shape on the donor corpus and returns its parameters.
pub fn synthetic_pretrain(setup: &TaskSetup, horizon: usize, donor: &DonorSpec) -> Result<ParameterStore> {
    setup.validate()?;
    let corpus = donor_corpus(donor.n_series, donor.length, &mut RandomStream::derived(donor.seed, 7))?;
    let mut s = setup.clone();
    s.train.ablation = Ablation::NoPretrain;
    s.train.epochs = donor.epochs;
    s.train.seed = donor.seed;
    let ds = prepare_dataset(&corpus, &s)?;
    let cfg = forecast_model_config(&s, horizon)?;
    let (cfg, mut store, mask) = make_ablation(Ablation::NoPretrain, &cfg, &mut RandomStream::derived(s.train.seed, 0), None)?;
    let (train, _) = forecast_samples(&ds, &s, horizon, Split::Train)?;
    let (val, _) = forecast_samples(&ds, &s, horizon, Split::Val)?;
    train_model(&cfg, &mut store, &mask, &train, &val, &s.train)?;
    Ok(store)
}

/// One arm of the ablation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub arm: Ablation,
    pub mse: f64,
    pub mae: f64,
    /// Test MSE of the arm's initial parameters, before any update.
    pub step0_mse: f64,
}

fn step0_mse(ds: &TimeSeriesDataset, setup: &TaskSetup, horizon: usize, weights: Option<&ParameterStore>) -> Result<f64> {
    let prepared = prepare_dataset(ds, setup)?;
    let cfg = forecast_model_config(setup, horizon)?;
    let (model, store, _) =
        make_ablation(setup.train.ablation, &cfg, &mut RandomStream::derived(setup.train.seed, 0), weights)?;
    let (test, _) = forecast_samples(&prepared, setup, horizon, Split::Test)?;
    let (pred, truth) = evaluate_forecast(&store, &model, &test)?;
    metrics::mse(&truth, &pred)
}

/// Runs every ablation arm on the `percent` most recent training data and
/// tabulates test MSE/MAE per arm.
pub fn run_ablation(
    ds: &TimeSeriesDataset,
    setup: &TaskSetup,
    horizon: usize,
    weights: Option<&ParameterStore>,
    percent: f64,
) -> Result<(MetricReport, Vec<AblationRow>)> {
    let subset = few_shot_subset(ds, percent)?;
    let mut report = MetricReport::new("ablation", &ds.name, setup.train.seed);
    report.metadata.config_hash = config_hash(&(setup, horizon, percent));
    report.metadata.extra.insert("percent".into(), percent.into());
    let mut rows = Vec::new();
    let mut step0 = BTreeMap::new();
    for arm in Ablation::ALL {
        let mut s = setup.clone();
        s.train.ablation = arm;
        let run = run_forecast(&subset, &s, horizon, weights)?;
        let row = run.report.row(&format!("horizon={horizon}")).expect("forecast row");
        let (mse, mae) = (row.get("MSE").unwrap_or(f64::NAN), row.get("MAE").unwrap_or(f64::NAN));
        let s0 = step0_mse(&subset, &s, horizon, weights)?;
        step0.insert(arm.label().to_owned(), s0);
        report.push(MetricRow::new(arm.label()).with("MSE", mse).with("MAE", mae));
        rows.push(AblationRow { arm, mse, mae, step0_mse: s0 });
    }
    report.metadata.extra.insert("step0_MSE".into(), serde_json::to_value(&step0).expect("serializes"));
    Ok((report, rows))
}
