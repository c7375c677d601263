use serde::{Deserialize, Serialize};

use super::ablation::make_ablation;
use super::train::{predict_all, train_model};
use super::{config_hash, RunOutput, TaskSetup};
use crate::backbone::{IoConfig, ModelConfig, ParameterStore, Pooling, Sample, Target};
use crate::data::{few_shot_subset, make_windows, Split, TimeSeriesDataset, Window, WindowSpec};
use crate::error::{FptError, Result};
use crate::metrics::{self, MetricReport, MetricRow};
use crate::numerics::{Matrix, RandomStream};
use crate::preprocess::{patchify, revin_normalize, InstanceStats};

/// Windows of `len` steps, `stride` apart, lying wholly inside one split
/// segment, channel by channel.
pub(crate) fn segment_windows(ds: &TimeSeriesDataset, split: Split, len: usize, stride: usize) -> Vec<Vec<f64>> {
    let (lo, hi) = ds.segment(split);
    let mut out = Vec::new();
    if hi < lo + len {
        return out;
    }
    for c in 0..ds.n_channels() {
        let series = ds.channel(c);
        let mut s = lo;
        while s + len <= hi {
            out.push(series[s..s + len].to_vec());
            s += stride;
        }
    }
    out
}

/// Applies the setup's dataset-level scaling.
pub(crate) fn prepare_dataset(ds: &TimeSeriesDataset, setup: &TaskSetup) -> Result<TimeSeriesDataset> {
    if setup.standardize {
        ds.standardized()
    } else {
        Ok(ds.clone())
    }
}

/// Instance-normalizes (when enabled) and patchifies one input window.
pub(crate) fn encode_window(x: &[f64], setup: &TaskSetup) -> Result<(Matrix, InstanceStats)> {
    let (z, stats) = if setup.revin {
        revin_normalize(x, setup.revin_eps)?
    } else {
        (x.to_vec(), InstanceStats { mean: 0.0, std: 1.0, eps: 0.0 })
    };
    Ok((patchify(&z, &setup.patch)?, stats))
}

/// Maps raw outputs back to data scale using the sample's stored statistics.
pub(crate) fn denormalize_output(out: &[f64], target: &Target) -> Vec<f64> {
    match target {
        Target::Values { scale, shift, .. } => out.iter().map(|o| o * scale + shift).collect(),
        Target::Class(_) => out.to_vec(),
    }
}

pub(crate) fn forecast_model_config(setup: &TaskSetup, horizon: usize) -> Result<ModelConfig> {
    ModelConfig::new(
        setup.backbone.clone(),
        IoConfig {
            input_dim: setup.patch.patch_len,
            pooling: Pooling::Flatten { n_tokens: setup.n_patches()? },
            out_dim: horizon,
        },
    )
}

pub(crate) fn forecast_samples(
    ds: &TimeSeriesDataset,
    setup: &TaskSetup,
    horizon: usize,
    split: Split,
) -> Result<(Vec<Sample>, Vec<Window>)> {
    let spec = WindowSpec::new(setup.lookback, horizon, setup.stride)?;
    let windows = make_windows(ds, &spec, split)?;
    let samples = windows
        .iter()
        .map(|w| {
            let (tokens, stats) = encode_window(&w.input, setup)?;
            Ok(Sample {
                tokens,
                target: Target::Values { values: w.target.clone(), weights: None, scale: stats.scale(), shift: stats.mean },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((samples, windows))
}

/// Validation samples, or none (with a report warning) when the segment is
/// too short.
pub(crate) fn optional_samples(
    ds: &TimeSeriesDataset,
    setup: &TaskSetup,
    horizon: usize,
    split: Split,
    report: &mut MetricReport,
) -> Result<Vec<Sample>> {
    match forecast_samples(ds, setup, horizon, split) {
        Ok((s, _)) => Ok(s),
        Err(FptError::InsufficientData(msg)) => {
            report.warn(format!("no {split:?} windows ({msg}); early stopping monitors training loss"));
            Ok(Vec::new())
        }
        Err(e) => Err(e),
    }
}

/// Denormalized predictions and targets over `samples`, concatenated.
pub(crate) fn evaluate_forecast(store: &ParameterStore, cfg: &ModelConfig, samples: &[Sample]) -> Result<(Vec<f64>, Vec<f64>)> {
    let outs = predict_all(store, cfg, samples)?;
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for (out, s) in outs.iter().zip(samples) {
        pred.extend(denormalize_output(out, &s.target));
        if let Target::Values { values, .. } = &s.target {
            truth.extend_from_slice(values);
        }
    }
    Ok((pred, truth))
}

/// Repeat-last-value forecast for every window, concatenated.
fn naive_forecast(windows: &[Window]) -> Vec<f64> {
    windows
        .iter()
        .flat_map(|w| std::iter::repeat_n(*w.input.last().expect("non-empty window"), w.target.len()))
        .collect()
}

struct Trained {
    model: ModelConfig,
    store: ParameterStore,
    log: super::TrainLog,
    report: MetricReport,
}

fn train_forecaster(
    ds: &TimeSeriesDataset,
    setup: &TaskSetup,
    horizon: usize,
    weights: Option<&ParameterStore>,
    task: &str,
) -> Result<Trained> {
    setup.validate()?;
    if horizon == 0 {
        return Err(FptError::InvalidInput("forecast horizon must be positive".into()));
    }
    let base = forecast_model_config(setup, horizon)?;
    let mut rng = RandomStream::derived(setup.train.seed, 0);
    let (model, mut store, mask) = make_ablation(setup.train.ablation, &base, &mut rng, weights)?;

    let mut report = MetricReport::new(task, &ds.name, setup.train.seed);
    report.metadata.config_hash = config_hash(&(setup, horizon));
    let (train, _) = forecast_samples(ds, setup, horizon, Split::Train)?;
    let val = optional_samples(ds, setup, horizon, Split::Val, &mut report)?;
    let log = train_model(&model, &mut store, &mask, &train, &val, &setup.train)?;

    let extra = &mut report.metadata.extra;
    extra.insert("ablation".into(), serde_json::to_value(setup.train.ablation).expect("serializes"));
    extra.insert("lookback".into(), setup.lookback.into());
    extra.insert("horizon".into(), horizon.into());
    extra.insert("train_windows".into(), train.len().into());
    extra.insert("best_epoch".into(), log.best_epoch.into());
    extra.insert("n_params".into(), store.n_params().into());
    let n_trainable: usize =
        store.tensors().iter().filter(|(n, _)| mask.is_trainable(n)).map(|(_, t)| t.len()).sum();
    extra.insert("n_trainable".into(), n_trainable.into());
    Ok(Trained { model, store, log, report })
}

fn horizon_scope(horizon: usize) -> String {
    format!("horizon={horizon}")
}

/// Trains on the training split (early stopping on validation) and reports
/// test MSE/MAE next to the repeat-last-value baseline.
pub fn run_forecast(
    ds: &TimeSeriesDataset,
    setup: &TaskSetup,
    horizon: usize,
    weights: Option<&ParameterStore>,
) -> Result<RunOutput> {
    let ds = prepare_dataset(ds, setup)?;
    let Trained { model, store, log, mut report } = train_forecaster(&ds, setup, horizon, weights, "forecast")?;
    let (test, windows) = forecast_samples(&ds, setup, horizon, Split::Test)?;
    let (pred, truth) = evaluate_forecast(&store, &model, &test)?;
    let naive = naive_forecast(&windows);
    report.push(
        MetricRow::new(horizon_scope(horizon))
            .with("MSE", metrics::mse(&truth, &pred)?)
            .with("MAE", metrics::mae(&truth, &pred)?),
    );
    report.push(
        MetricRow::new("baseline:repeat_last")
            .with("MSE", metrics::mse(&truth, &naive)?)
            .with("MAE", metrics::mae(&truth, &naive)?),
    );
    report.metadata.extra.insert("test_windows".into(), test.len().into());
    Ok(RunOutput { report, model, store, log })
}

/// Runs the forecaster on the most recent `p` fraction of the training
/// segment for each `p`; one report row per fraction.
pub fn run_few_shot(
    ds: &TimeSeriesDataset,
    setup: &TaskSetup,
    horizon: usize,
    percents: &[f64],
    weights: Option<&ParameterStore>,
) -> Result<(MetricReport, Vec<RunOutput>)> {
    if percents.is_empty() {
        return Err(FptError::InvalidInput("no few-shot fractions given".into()));
    }
    let mut report = MetricReport::new("fewshot", &ds.name, setup.train.seed);
    report.metadata.config_hash = config_hash(&(setup, horizon, percents));
    report.metadata.extra.insert("percents".into(), serde_json::to_value(percents).expect("serializes"));
    let mut runs = Vec::with_capacity(percents.len());
    for &p in percents {
        let subset = few_shot_subset(ds, p)?;
        let run = run_forecast(&subset, setup, horizon, weights)?;
        let row = run.report.row(&horizon_scope(horizon)).expect("forecast row");
        let mut out = MetricRow::new(format!("percent={p}"));
        out.metrics = row.metrics.clone();
        report.push(out);
        for w in &run.report.metadata.warnings {
            report.warn(w.clone());
        }
        runs.push(run);
    }
    Ok((report, runs))
}

/// Error measure used to score a zero-shot target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroShotMetric {
    Smape,
    Mape,
    Nd,
}

impl ZeroShotMetric {
    pub fn label(self) -> &'static str {
        match self {
            ZeroShotMetric::Smape => "sMAPE",
            ZeroShotMetric::Mape => "MAPE",
            ZeroShotMetric::Nd => "ND",
        }
    }

    fn compute(self, y: &[f64], yhat: &[f64]) -> Result<f64> {
        match self {
            ZeroShotMetric::Smape => metrics::smape(y, yhat),
            ZeroShotMetric::Mape => metrics::mape(y, yhat),
            ZeroShotMetric::Nd => metrics::nd(y, yhat),
        }
    }
}

/// Conventional metric per benchmark family: M4 and M3 use sMAPE, TOURISM
/// uses MAPE, ELECTR uses ND; anything else falls back to sMAPE.
pub fn zero_shot_metric_for(dataset: &str) -> ZeroShotMetric {
    let name = dataset.to_ascii_uppercase();
    if name.starts_with("TOURISM") {
        ZeroShotMetric::Mape
    } else if name.starts_with("ELECTR") {
        ZeroShotMetric::Nd
    } else {
        ZeroShotMetric::Smape
    }
}

/// Window geometry a target dataset is evaluated with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowShape {
    pub lookback: usize,
    pub horizon: usize,
    pub patch_len: usize,
    pub patch_stride: usize,
}

/// Trains on `source`, then scores the test split of `target` without any
/// parameter update. The parameter hash is recorded before and after the
/// target evaluation.
#[allow(clippy::too_many_arguments)]
pub fn run_zero_shot(
    source: &TimeSeriesDataset,
    target: &TimeSeriesDataset,
    setup: &TaskSetup,
    horizon: usize,
    target_shape: Option<WindowShape>,
    metric: Option<ZeroShotMetric>,
    weights: Option<&ParameterStore>,
) -> Result<RunOutput> {
    let source_shape = WindowShape {
        lookback: setup.lookback,
        horizon,
        patch_len: setup.patch.patch_len,
        patch_stride: setup.patch.stride,
    };
    if let Some(shape) = target_shape {
        if shape != source_shape {
            return Err(FptError::InvalidInput(format!(
                "target windows {shape:?} are incompatible with source windows {source_shape:?}"
            )));
        }
    }
    let metric = metric.unwrap_or_else(|| zero_shot_metric_for(&target.name));
    let src = prepare_dataset(source, setup)?;
    let tgt = prepare_dataset(target, setup)?;
    let Trained { model, store, log, mut report } = train_forecaster(&src, setup, horizon, weights, "zeroshot")?;
    report.metadata.dataset = format!("{}->{}", source.name, target.name);

    let (src_test, _) = forecast_samples(&src, setup, horizon, Split::Test)?;
    let (sp, st) = evaluate_forecast(&store, &model, &src_test)?;
    report.push(
        MetricRow::new(format!("source:{}", horizon_scope(horizon)))
            .with("MSE", metrics::mse(&st, &sp)?)
            .with("MAE", metrics::mae(&st, &sp)?),
    );

    let hash_before = store.content_hash();
    let (tgt_test, windows) = forecast_samples(&tgt, setup, horizon, Split::Test)?;
    let (tp, tt) = evaluate_forecast(&store, &model, &tgt_test)?;
    let hash_after = store.content_hash();
    let naive = naive_forecast(&windows);

    let score = |y: &[f64], yhat: &[f64], report: &mut MetricReport| match metric.compute(y, yhat) {
        Ok(v) => v,
        Err(e) => {
            report.warn(format!("{} undefined on target: {e}", metric.label()));
            f64::NAN
        }
    };
    let m_model = score(&tt, &tp, &mut report);
    let m_naive = score(&tt, &naive, &mut report);
    report.push(
        MetricRow::new(format!("target:{}", horizon_scope(horizon)))
            .with("MSE", metrics::mse(&tt, &tp)?)
            .with("MAE", metrics::mae(&tt, &tp)?)
            .with(metric.label(), m_model),
    );
    report.push(
        MetricRow::new("target:baseline:repeat_last")
            .with("MSE", metrics::mse(&tt, &naive)?)
            .with("MAE", metrics::mae(&tt, &naive)?)
            .with(metric.label(), m_naive),
    );
    let extra = &mut report.metadata.extra;
    extra.insert("metric".into(), metric.label().into());
    extra.insert("param_hash_before".into(), hash_before.clone().into());
    extra.insert("param_hash_after".into(), hash_after.clone().into());
    if hash_before != hash_after {
        return Err(FptError::NumericalFailure("parameters changed during zero-shot evaluation".into()));
    }
    Ok(RunOutput { report, model, store, log })
}
