use serde::{Deserialize, Serialize};

use super::ablation::make_ablation;
use super::forecast::{denormalize_output, encode_window, prepare_dataset};
use super::train::{predict_all, train_model};
use super::{config_hash, RunOutput, TaskSetup};
use crate::backbone::{IoConfig, ModelConfig, ParameterStore, Pooling, Sample, Target};
use crate::data::{Split, TimeSeriesDataset};
use crate::error::{FptError, Result};
use crate::metrics::{prf1, MetricReport, MetricRow};
use crate::numerics::RandomStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyOptions {
    /// Quantile of training reconstruction errors used as the threshold.
    #[serde(default = "default_q")]
    pub quantile: f64,
    /// Credit a whole labelled segment when any of its points is flagged.
    #[serde(default)]
    pub point_adjust: bool,
    /// Expected anomaly fraction; overrides `quantile` with `1 − ratio`.
    #[serde(default)]
    pub anomaly_ratio: Option<f64>,
    /// Clamp model inputs to the per-channel range seen in the training
    /// segment. Errors are still measured against the unclamped values.
    #[serde(default = "yes")]
    pub clip_inputs: bool,
}

fn yes() -> bool {
    true
}

fn default_q() -> f64 {
    0.99
}

impl Default for AnomalyOptions {
    fn default() -> Self {
        Self { quantile: default_q(), point_adjust: false, anomaly_ratio: None, clip_inputs: true }
    }
}

impl AnomalyOptions {
    pub fn effective_quantile(&self) -> Result<f64> {
        let q = match self.anomaly_ratio {
            Some(r) => 1.0 - r,
            None => self.quantile,
        };
        if !(q > 0.0 && q < 1.0) {
            return Err(FptError::InvalidInput(format!("threshold quantile must lie in (0,1), got {q}")));
        }
        Ok(q)
    }
}

/// Linear-interpolation quantile (the `(n − 1)·q` position of the sorted
/// values).
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(FptError::InvalidInput("quantile of an empty set".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(FptError::InvalidInput(format!("quantile level must lie in [0,1], got {q}")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

/// Threshold on per-point reconstruction errors.
pub fn anomaly_threshold(train_errors: &[f64], q: f64) -> Result<f64> {
    quantile(train_errors, q)
}

fn recon_sample(x: &[f64], setup: &TaskSetup, range: Option<(f64, f64)>) -> Result<Sample> {
    let (tokens, stats) = match range {
        Some((lo, hi)) => encode_window(&x.iter().map(|v| v.clamp(lo, hi)).collect::<Vec<_>>(), setup)?,
        None => encode_window(x, setup)?,
    };
    Ok(Sample {
        tokens,
        target: Target::Values { values: x.to_vec(), weights: None, scale: stats.scale(), shift: stats.mean },
    })
}

/// Squared reconstruction error of every timestep of a split segment,
/// averaged over channels. The segment is tiled by consecutive windows; a
/// final window aligned to the segment end covers any remainder.
fn point_errors(
    store: &ParameterStore,
    cfg: &ModelConfig,
    ds: &TimeSeriesDataset,
    split: Split,
    setup: &TaskSetup,
    ranges: &[Option<(f64, f64)>],
) -> Result<Vec<f64>> {
    let (lo, hi) = ds.segment(split);
    let l = setup.lookback;
    if hi < lo + l {
        return Err(FptError::InsufficientData(format!("{split:?} segment shorter than the {l}-step window")));
    }
    let mut starts: Vec<usize> = (lo..=hi - l).step_by(l).collect();
    if starts.last().is_none_or(|s| s + l < hi) {
        starts.push(hi - l);
    }
    let mut errors = vec![0.0; hi - lo];
    for c in 0..ds.n_channels() {
        let series = ds.channel(c);
        let samples: Vec<Sample> =
            starts.iter().map(|&s| recon_sample(&series[s..s + l], setup, ranges[c])).collect::<Result<_>>()?;
        let outs = predict_all(store, cfg, &samples)?;
        let mut covered = lo;
        for ((&s, out), sample) in starts.iter().zip(&outs).zip(&samples) {
            let recon = denormalize_output(out, &sample.target);
            for t in covered.max(s)..s + l {
                let r = recon[t - s] - series[t];
                errors[t - lo] += r * r / ds.n_channels() as f64;
            }
            covered = s + l;
        }
    }
    Ok(errors)
}

/// Reconstruction-based detection: an autoencoder is fit to training
/// windows, the threshold is a quantile of its training errors, and test
/// points above it are flagged.
pub fn run_anomaly(
    ds: &TimeSeriesDataset,
    setup: &TaskSetup,
    opts: &AnomalyOptions,
    weights: Option<&ParameterStore>,
) -> Result<RunOutput> {
    setup.validate()?;
    let q = opts.effective_quantile()?;
    let labels = match &ds.labels {
        Some(l) if l.len() == ds.len() => l.clone(),
        _ => return Err(FptError::InvalidInput("anomaly detection needs one 0/1 label per timestep".into())),
    };
    let ds = prepare_dataset(ds, setup)?;
    let base = ModelConfig::new(
        setup.backbone.clone(),
        IoConfig {
            input_dim: setup.patch.patch_len,
            pooling: Pooling::Flatten { n_tokens: setup.n_patches()? },
            out_dim: setup.lookback,
        },
    )?;
    let mut report = MetricReport::new("anomaly", &ds.name, setup.train.seed);
    report.metadata.config_hash = config_hash(&(setup, opts));

    let (tlo, thi) = ds.segment(Split::Train);
    let ranges: Vec<Option<(f64, f64)>> = (0..ds.n_channels())
        .map(|c| {
            let seg = &ds.channel(c)[tlo..thi];
            let lo = seg.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            opts.clip_inputs.then_some((lo, hi))
        })
        .collect();
    let windows = |split: Split| -> Result<Vec<Sample>> {
        let (lo, hi) = ds.segment(split);
        let mut out = Vec::new();
        for c in 0..ds.n_channels() {
            let series = ds.channel(c);
            let mut s = lo;
            while s + setup.lookback <= hi {
                out.push(recon_sample(&series[s..s + setup.lookback], setup, ranges[c])?);
                s += setup.stride;
            }
        }
        Ok(out)
    };
    let train = windows(Split::Train)?;
    let val = windows(Split::Val)?;
    if val.is_empty() {
        report.warn("no validation windows; early stopping monitors training loss");
    }
    let (model, mut store, mask) =
        make_ablation(setup.train.ablation, &base, &mut RandomStream::derived(setup.train.seed, 0), weights)?;
    let log = train_model(&model, &mut store, &mask, &train, &val, &setup.train)?;

    let train_err = point_errors(&store, &model, &ds, Split::Train, setup, &ranges)?;
    let threshold = anomaly_threshold(&train_err, q)?;
    let test_err = point_errors(&store, &model, &ds, Split::Test, setup, &ranges)?;
    let (lo, _) = ds.segment(Split::Test);
    let pred: Vec<bool> = test_err.iter().map(|e| *e > threshold).collect();
    let truth: Vec<bool> = labels[lo..].iter().map(|l| *l != 0).collect();
    let r = prf1(&pred, &truth, opts.point_adjust)?;
    for w in &r.warnings {
        report.warn(w.clone());
    }
    report.push(MetricRow::new("test").with("precision", r.precision).with("recall", r.recall).with("F1", r.f1));
    let extra = &mut report.metadata.extra;
    extra.insert("threshold".into(), threshold.into());
    extra.insert("quantile".into(), q.into());
    extra.insert("point_adjust".into(), opts.point_adjust.into());
    extra.insert("flagged".into(), pred.iter().filter(|p| **p).count().into());
    extra.insert("true_anomalies".into(), truth.iter().filter(|t| **t).count().into());
    Ok(RunOutput { report, model, store, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&v, 1.0).unwrap(), 4.0);
        assert_eq!(quantile(&v, 0.5).unwrap(), 2.5);
        assert!(quantile(&[], 0.5).is_err());
    }

    #[test]
    fn threshold_is_monotone_in_q() {
        let mut rng = RandomStream::new(3);
        let errs: Vec<f64> = (0..500).map(|_| rng.gaussian().abs()).collect();
        let mut prev = f64::NEG_INFINITY;
        for i in 1..100 {
            let t = anomaly_threshold(&errs, i as f64 / 100.0).unwrap();
            assert!(t >= prev);
            prev = t;
        }
    }

    #[test]
    fn ratio_overrides_quantile() {
        let o = AnomalyOptions { anomaly_ratio: Some(0.05), ..Default::default() };
        assert!((o.effective_quantile().unwrap() - 0.95).abs() < 1e-15);
        let bad = AnomalyOptions { quantile: 1.0, ..Default::default() };
        assert!(bad.effective_quantile().is_err());
    }
}
