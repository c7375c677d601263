use super::ablation::make_ablation;
use super::forecast::{denormalize_output, prepare_dataset, segment_windows};
use super::train::{predict_all, train_model};
use super::{config_hash, RunOutput, TaskSetup, TrainLog};
use crate::backbone::{IoConfig, ModelConfig, ParameterStore, Pooling, Sample, Target};
use crate::data::{random_mask, Split, TimeSeriesDataset};
use crate::error::{FptError, Result};
use crate::metrics::{self, MetricReport, MetricRow};
use crate::numerics::{Matrix, RandomStream};
use crate::preprocess::{patchify, revin_normalize_observed, InstanceStats};

struct Masked {
    sample: Sample,
    window: Vec<f64>,
    observed: Vec<f64>,
}

fn masked_sample(x: &[f64], ratio: f64, setup: &TaskSetup, rng: &mut RandomStream) -> Result<Masked> {
    let l = x.len();
    let mut observed = random_mask(l, 1, ratio, rng)?.mask.into_data();
    // Every window must score at least one masked point.
    if observed.iter().all(|v| *v != 0.0) {
        observed[rng.below(l)] = 0.0;
    }
    let (z, stats) = if setup.revin {
        revin_normalize_observed(x, &observed, setup.revin_eps)?
    } else {
        let z = x.iter().zip(&observed).map(|(v, m)| v * m).collect();
        (z, InstanceStats { mean: 0.0, std: 1.0, eps: 0.0 })
    };
    let mut tokens = patchify(&z, &setup.patch)?;
    if setup.mask_channel {
        tokens = Matrix::hstack(&[tokens, patchify(&observed, &setup.patch)?])?;
    }
    let weights = observed.iter().map(|m| 1.0 - m).collect();
    Ok(Masked {
        sample: Sample {
            tokens,
            target: Target::Values { values: x.to_vec(), weights: Some(weights), scale: stats.scale(), shift: stats.mean },
        },
        window: x.to_vec(),
        observed,
    })
}

fn masked_set(
    ds: &TimeSeriesDataset,
    split: Split,
    ratio: f64,
    setup: &TaskSetup,
    rng: &mut RandomStream,
) -> Result<Vec<Masked>> {
    segment_windows(ds, split, setup.lookback, setup.stride)
        .iter()
        .map(|w| masked_sample(w, ratio, setup, rng))
        .collect()
}

/// Trains one reconstruction model per mask ratio and reports MSE/MAE over
/// the masked test entries, alongside a fill-with-window-mean baseline.
pub fn run_imputation(
    ds: &TimeSeriesDataset,
    setup: &TaskSetup,
    ratios: &[f64],
    weights: Option<&ParameterStore>,
) -> Result<RunOutput> {
    setup.validate()?;
    super::TaskSpec::Imputation { ratios: ratios.to_vec() }.validate()?;
    let ds = prepare_dataset(ds, setup)?;
    let n_tokens = setup.n_patches()?;
    let base = ModelConfig::new(
        setup.backbone.clone(),
        IoConfig {
            input_dim: setup.patch.patch_len * if setup.mask_channel { 2 } else { 1 },
            pooling: Pooling::Flatten { n_tokens },
            out_dim: setup.lookback,
        },
    )?;
    let mut report = MetricReport::new("imputation", &ds.name, setup.train.seed);
    report.metadata.config_hash = config_hash(&(setup, ratios));
    let mut last = None;
    for (ri, &ratio) in ratios.iter().enumerate() {
        let mut rng = RandomStream::derived(setup.train.seed, 100 + ri as u64);
        let train = masked_set(&ds, Split::Train, ratio, setup, &mut rng)?;
        let val = masked_set(&ds, Split::Val, ratio, setup, &mut rng)?;
        let test = masked_set(&ds, Split::Test, ratio, setup, &mut rng)?;
        if train.is_empty() || test.is_empty() {
            return Err(FptError::InsufficientData(format!(
                "train or test segment shorter than the {}-step window",
                setup.lookback
            )));
        }
        if val.is_empty() {
            report.warn("no validation windows; early stopping monitors training loss");
        }
        let (model, mut store, mask) =
            make_ablation(setup.train.ablation, &base, &mut RandomStream::derived(setup.train.seed, 0), weights)?;
        let train_s: Vec<Sample> = train.into_iter().map(|m| m.sample).collect();
        let val_s: Vec<Sample> = val.into_iter().map(|m| m.sample).collect();
        let log = train_model(&model, &mut store, &mask, &train_s, &val_s, &setup.train)?;

        let test_s: Vec<Sample> = test.iter().map(|m| m.sample.clone()).collect();
        let outs = predict_all(&store, &model, &test_s)?;
        let (mut truth, mut pred, mut base_pred) = (Vec::new(), Vec::new(), Vec::new());
        for (out, m) in outs.iter().zip(&test) {
            let recon = denormalize_output(out, &m.sample.target);
            let seen: Vec<f64> = m.window.iter().zip(&m.observed).filter(|(_, o)| **o != 0.0).map(|(v, _)| *v).collect();
            let fill = seen.iter().sum::<f64>() / seen.len() as f64;
            for i in 0..m.window.len() {
                if m.observed[i] == 0.0 {
                    truth.push(m.window[i]);
                    pred.push(recon[i]);
                    base_pred.push(fill);
                }
            }
        }
        report.push(
            MetricRow::new(format!("ratio={ratio}"))
                .with("MSE", metrics::mse(&truth, &pred)?)
                .with("MAE", metrics::mae(&truth, &pred)?)
                .with("baseline_mean_MSE", metrics::mse(&truth, &base_pred)?)
                .with("baseline_mean_MAE", metrics::mae(&truth, &base_pred)?),
        );
        last = Some((model, store, log));
    }
    report.add_average_row();
    let (model, store, log): (ModelConfig, ParameterStore, TrainLog) = last.expect("at least one ratio");
    Ok(RunOutput { report, model, store, log })
}
