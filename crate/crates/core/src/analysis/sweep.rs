use serde::{Deserialize, Serialize};

use super::similarity::{token_similarity_batch, TokenSimilarityProfile};
use crate::backbone::{forward, init_random, mix_weights, AttentionMode, FreezeMask, MixMode, ParameterStore};
use crate::data::{Split, TimeSeriesDataset};
use crate::error::{FptError, Result};
use crate::metrics::mse;
use crate::numerics::{derive_seed, RandomStream};
use crate::tasks::forecast::{evaluate_forecast, forecast_model_config, forecast_samples, prepare_dataset};
use crate::tasks::{train_model, TaskSetup};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOptions {
    /// Fine-tuning epochs after mixing; the rest of `setup.train` applies.
    #[serde(default = "default_epochs")]
    pub finetune_epochs: usize,
    /// Number of leading test windows whose traces are profiled.
    #[serde(default = "default_eval")]
    pub eval_batch: usize,
    #[serde(default)]
    pub mix_mode: MixMode,
    #[serde(default)]
    pub attention: AttentionMode,
}

fn default_epochs() -> usize {
    1
}
fn default_eval() -> usize {
    16
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { finetune_epochs: 1, eval_batch: 16, mix_mode: MixMode::default(), attention: AttentionMode::Softmax }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub profile: TokenSimilarityProfile,
    pub test_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// `ratio,test_mse,layer_0,…` with one similarity column per trace layer.
    pub fn to_csv(&self) -> String {
        let layers = self.rows.first().map_or(0, |r| r.profile.layer_means.len());
        let mut s = String::from("ratio,test_mse");
        for l in 0..layers {
            s.push_str(&format!(",layer_{l}"));
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("{},{}", r.ratio, r.test_mse));
            for m in &r.profile.layer_means {
                s.push_str(&format!(",{m}"));
            }
            s.push('\n');
        }
        s
    }
}

/// For each ratio: blend random parameters into the pretrained attention and
/// feed-forward tensors, fine-tune the default trainable group for a small
/// fixed budget, then profile token similarity on a fixed batch of test
/// windows and score test MSE.
pub fn mixed_weights_similarity_sweep(
    pretrained: Option<&ParameterStore>,
    ds: &TimeSeriesDataset,
    setup: &TaskSetup,
    horizon: usize,
    ratios: &[f64],
    opts: &SweepOptions,
) -> Result<SweepTable> {
    let pretrained = pretrained.ok_or_else(|| FptError::MissingWeights("the mixing sweep needs pretrained weights".into()))?;
    setup.validate()?;
    if ratios.is_empty() || ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(FptError::InvalidInput(format!("ratios must lie in [0, 1], got {ratios:?}")));
    }
    if opts.eval_batch == 0 {
        return Err(FptError::InvalidInput("eval_batch must be positive".into()));
    }
    let cfg = forecast_model_config(setup, horizon)?;
    pretrained.check_shapes(&cfg)?;
    let prepared = prepare_dataset(ds, setup)?;
    let (train, _) = forecast_samples(&prepared, setup, horizon, Split::Train)?;
    let (test, _) = forecast_samples(&prepared, setup, horizon, Split::Test)?;
    let random = init_random(&cfg, &mut RandomStream::derived(setup.train.seed, 1))?;
    let mask = FreezeMask::fpt_default(pretrained);
    let mut tc = setup.train.clone();
    tc.epochs = opts.finetune_epochs;

    let eval = &test[..opts.eval_batch.min(test.len())];
    let mut rows = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        let mut rng = RandomStream::new(derive_seed(setup.train.seed, ratio.to_bits()));
        let mut store = mix_weights(pretrained, &random, ratio, opts.mix_mode, &mut rng)?;
        if tc.epochs > 0 {
            train_model(&cfg, &mut store, &mask, &train, &[], &tc)?;
        }
        let traces = eval
            .iter()
            .map(|s| forward(&store, &cfg, &s.tokens, opts.attention).map(|(_, t)| t))
            .collect::<Result<Vec<_>>>()?;
        let profile = token_similarity_batch(&traces)?;
        let (pred, truth) = evaluate_forecast(&store, &cfg, &test)?;
        rows.push(SweepRow { ratio, profile, test_mse: mse(&truth, &pred)? });
    }
    Ok(SweepTable { rows })
}

/// Token similarity of `store` on the first `eval_batch` test windows of a
/// forecasting setup.
pub fn forecast_token_similarity(
    store: &ParameterStore,
    ds: &TimeSeriesDataset,
    setup: &TaskSetup,
    horizon: usize,
    eval_batch: usize,
    mode: AttentionMode,
) -> Result<TokenSimilarityProfile> {
    if eval_batch == 0 {
        return Err(FptError::InvalidInput("eval_batch must be positive".into()));
    }
    let cfg = forecast_model_config(setup, horizon)?;
    store.check_shapes(&cfg)?;
    let prepared = prepare_dataset(ds, setup)?;
    let (test, _) = forecast_samples(&prepared, setup, horizon, Split::Test)?;
    let traces = test[..eval_batch.min(test.len())]
        .iter()
        .map(|s| forward(store, &cfg, &s.tokens, mode).map(|(_, t)| t))
        .collect::<Result<Vec<_>>>()?;
    token_similarity_batch(&traces)
}
