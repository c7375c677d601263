use std::collections::BTreeSet;

use super::ablation::make_ablation;
use super::forecast::encode_window;
use super::train::{predict_all, train_model};
use super::{config_hash, RunOutput, TaskSetup};
use crate::backbone::{IoConfig, ModelConfig, ParameterStore, Pooling, Sample, Target};
use crate::data::TimeSeriesDataset;
use crate::error::{FptError, Result};
use crate::metrics::{MetricReport, MetricRow};
use crate::numerics::RandomStream;

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn accuracy(store: &ParameterStore, cfg: &ModelConfig, samples: &[Sample]) -> Result<(f64, Vec<usize>)> {
    let outs = predict_all(store, cfg, samples)?;
    let preds: Vec<usize> = outs.iter().map(|o| argmax(o)).collect();
    let hits = preds
        .iter()
        .zip(samples)
        .filter(|(p, s)| matches!(s.target, Target::Class(c) if c == **p))
        .count();
    Ok((hits as f64 / samples.len() as f64, preds))
}

/// Sequence-level classification: every column is one labelled series.
///
/// Series are shuffled once and split 70/10/20 into train, validation and
/// test sets. Validation and test series contribute their last `lookback`
/// points. Training series contribute every `lookback` crop whose end lies
/// a multiple of `stride` before the series end, so the final window is
/// always among them. The head mean-pools the final token matrix. Labels are mapped to classes in
/// ascending order unless `n_classes` is given, in which case they must
/// already lie in `0..n_classes`.
pub fn run_classification(
    ds: &TimeSeriesDataset,
    setup: &TaskSetup,
    n_classes: Option<usize>,
    weights: Option<&ParameterStore>,
) -> Result<RunOutput> {
    setup.validate()?;
    let c = ds.n_channels();
    let labels = match &ds.labels {
        Some(l) if l.len() == c => l.clone(),
        _ => return Err(FptError::InvalidInput("classification needs one label per series (column)".into())),
    };
    let distinct: Vec<i64> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if distinct.len() < 2 {
        return Err(FptError::InvalidInput(format!("need at least two classes, found {}", distinct.len())));
    }
    let (k, classes): (usize, Vec<usize>) = match n_classes {
        Some(k) => {
            if let Some(bad) = labels.iter().find(|l| **l < 0 || **l as usize >= k) {
                return Err(FptError::InvalidInput(format!("label {bad} outside 0..{k}")));
            }
            (k, labels.iter().map(|l| *l as usize).collect())
        }
        None => (
            distinct.len(),
            labels.iter().map(|l| distinct.binary_search(l).expect("label present")).collect(),
        ),
    };
    if ds.len() < setup.lookback {
        return Err(FptError::InsufficientData(format!(
            "series of {} steps shorter than lookback {}",
            ds.len(),
            setup.lookback
        )));
    }

    let mut order: Vec<usize> = (0..c).collect();
    RandomStream::derived(setup.train.seed, 200).shuffle(&mut order);
    let n_test = ((0.2 * c as f64).round() as usize).max(1);
    let n_val = (0.1 * c as f64).round() as usize;
    if n_test + n_val >= c {
        return Err(FptError::InsufficientData(format!("{c} series are too few to split")));
    }
    let (train_idx, rest) = order.split_at(c - n_test - n_val);
    let (val_idx, test_idx) = rest.split_at(n_val);

    let l = setup.lookback;
    let make = |idx: &[usize], crops: bool| -> Result<Vec<Sample>> {
        let mut out = Vec::new();
        for &col in idx {
            let series = ds.channel(col);
            let mut end = series.len();
            loop {
                let (tokens, _) = encode_window(&series[end - l..end], setup)?;
                out.push(Sample { tokens, target: Target::Class(classes[col]) });
                if !crops || end < l + setup.stride {
                    break;
                }
                end -= setup.stride;
            }
        }
        Ok(out)
    };
    let (train, val, test) = (make(train_idx, true)?, make(val_idx, false)?, make(test_idx, false)?);

    let base = ModelConfig::new(
        setup.backbone.clone(),
        IoConfig { input_dim: setup.patch.patch_len, pooling: Pooling::MeanPool, out_dim: k },
    )?;
    let (model, mut store, mask) =
        make_ablation(setup.train.ablation, &base, &mut RandomStream::derived(setup.train.seed, 0), weights)?;
    let log = train_model(&model, &mut store, &mask, &train, &val, &setup.train)?;

    let (test_acc, preds) = accuracy(&store, &model, &test)?;
    let (train_acc, _) = accuracy(&store, &model, &make(train_idx, false)?)?;
    let mut report = MetricReport::new("classification", &ds.name, setup.train.seed);
    report.metadata.config_hash = config_hash(&(setup, n_classes));
    report.push(MetricRow::new("test").with("accuracy", test_acc));
    report.push(MetricRow::new("train").with("accuracy", train_acc));
    let extra = &mut report.metadata.extra;
    extra.insert("n_classes".into(), k.into());
    extra.insert("n_train".into(), train_idx.len().into());
    extra.insert("n_train_windows".into(), train.len().into());
    extra.insert("n_val".into(), val.len().into());
    extra.insert("n_test".into(), test.len().into());
    extra.insert("test_predictions".into(), serde_json::to_value(&preds).expect("serializes"));
    Ok(RunOutput { report, model, store, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Frequency, TimeSeriesDataset};
    use crate::numerics::Matrix;

    #[test]
    fn single_class_and_unlabeled_rejected() {
        let m = Matrix::from_fn(32, 4, |t, c| (t + c) as f64);
        let ds = TimeSeriesDataset::new("x", m, Frequency::Unknown).unwrap();
        let mut setup = TaskSetup::new(32);
        setup.train.ablation = super::super::Ablation::NoPretrain;
        assert!(matches!(run_classification(&ds, &setup, None, None), Err(FptError::InvalidInput(_))));
        let one = ds.with_labels(vec![3; 4]).unwrap();
        assert!(matches!(run_classification(&one, &setup, None, None), Err(FptError::InvalidInput(_))));
    }

    #[test]
    fn argmax_picks_first_maximum() {
        assert_eq!(argmax(&[0.1, 0.9, 0.9]), 1);
        assert_eq!(argmax(&[2.0]), 0);
    }
}
