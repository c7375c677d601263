//! Forecast, imputation and anomaly-detection metrics.
//!
//! All functions are straight loops over the inputs and reject mismatched
//! lengths with `FptError::Shape`.

mod report;

pub use report::{MetricReport, MetricRow, MetricValue, ReportMetadata};

use crate::error::{FptError, Result};

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(FptError::Shape(format!("length mismatch: {} vs {}", y.len(), yhat.len())));
    }
    if y.is_empty() {
        return Err(FptError::InvalidInput("metric of empty series".into()));
    }
    Ok(())
}

/// Mean squared error.
pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// Mean absolute error.
pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Symmetric MAPE in percent, `(200/n) Σ |y − ŷ| / (|y| + |ŷ|)`.
///
/// Terms where both values are zero contribute zero.
pub fn smape(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let sum: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| {
            let denom = a.abs() + b.abs();
            if denom == 0.0 {
                0.0
            } else {
                (a - b).abs() / denom
            }
        })
        .sum();
    Ok(200.0 * sum / y.len() as f64)
}

/// Mean absolute scaled error against the in-sample seasonal naive forecast
/// with period `m`.
pub fn mase(y: &[f64], yhat: &[f64], insample: &[f64], m: usize) -> Result<f64> {
    check_pair(y, yhat)?;
    if m == 0 || insample.len() <= m {
        return Err(FptError::InvalidInput(format!(
            "MASE needs insample longer than the period ({} <= {m})",
            insample.len()
        )));
    }
    let scale = insample.windows(m + 1).map(|w| (w[m] - w[0]).abs()).sum::<f64>() / (insample.len() - m) as f64;
    if scale == 0.0 {
        return Err(FptError::DegenerateScale("seasonal naive in-sample error is zero".into()));
    }
    Ok(mae(y, yhat)? / scale)
}

/// Overall weighted average relative to reference sMAPE and MASE values.
pub fn owa(smape: f64, mase: f64, smape_ref: f64, mase_ref: f64) -> Result<f64> {
    if !(smape_ref > 0.0) || !(mase_ref > 0.0) {
        return Err(FptError::InvalidInput("OWA reference values must be positive".into()));
    }
    Ok(0.5 * (smape / smape_ref + mase / mase_ref))
}

/// Mean absolute percentage error in percent. Zero actuals are an error.
pub fn mape(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    if y.contains(&0.0) {
        return Err(FptError::DegenerateScale("MAPE with a zero actual value".into()));
    }
    Ok(100.0 * y.iter().zip(yhat).map(|(a, b)| ((a - b) / a).abs()).sum::<f64>() / y.len() as f64)
}

/// Normalized deviation `Σ|y − ŷ| / Σ|y|`.
pub fn nd(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let denom: f64 = y.iter().map(|v| v.abs()).sum();
    if denom == 0.0 {
        return Err(FptError::DegenerateScale("ND with all-zero actuals".into()));
    }
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / denom)
}

/// Precision, recall and F1 of a binary detection.
///
/// Undefined ratios (no predicted or no true positives) are `NaN` and noted
/// in `warnings`; F1 is then reported as 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub warnings: Vec<String>,
}

pub fn prf1(pred: &[bool], truth: &[bool], point_adjust: bool) -> Result<Prf1> {
    if pred.len() != truth.len() {
        return Err(FptError::Shape(format!("length mismatch: {} vs {}", pred.len(), truth.len())));
    }
    let pred = if point_adjust { adjust_points(pred, truth) } else { pred.to_vec() };
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let mut warnings = Vec::new();
    let precision = if tp + fp == 0 {
        warnings.push("precision undefined: no predicted positives".to_owned());
        f64::NAN
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        warnings.push("recall undefined: no true positives in ground truth".to_owned());
        f64::NAN
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision.is_nan() || recall.is_nan() {
        warnings.push("F1 reported as 0 because precision or recall is undefined".to_owned());
        0.0
    } else if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Prf1 { precision, recall, f1, warnings })
}

/// Marks every point of a true-anomaly segment as detected when any point of
/// that segment was detected.
pub fn adjust_points(pred: &[bool], truth: &[bool]) -> Vec<bool> {
    let mut out = pred.to_vec();
    let mut i = 0;
    while i < truth.len() {
        if !truth[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < truth.len() && truth[i] {
            i += 1;
        }
        if pred[start..i].iter().any(|p| *p) {
            out[start..i].iter_mut().for_each(|p| *p = true);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_mae_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mae(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(mse(&[0.0], &[1.0, 1.0]), Err(FptError::Shape(_))));
    }

    #[test]
    fn smape_examples() {
        assert_eq!(smape(&[2.0, 3.0], &[2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(smape(&[1.0], &[3.0]).unwrap(), 100.0);
        assert_eq!(smape(&[0.0], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn mase_examples() {
        let insample = [1.0, 2.0, 3.0, 1.0, 2.0, 4.0];
        assert_eq!(mase(&[1.0, 2.0], &[1.0, 2.0], &insample, 3).unwrap(), 0.0);
        assert!(matches!(mase(&[1.0], &[2.0], &[5.0; 10], 2), Err(FptError::DegenerateScale(_))));
        assert!(mase(&[1.0], &[2.0], &[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn owa_examples() {
        assert_eq!(owa(12.0, 1.5, 12.0, 1.5).unwrap(), 1.0);
        assert_eq!(owa(0.0, 0.0, 3.0, 2.0).unwrap(), 0.0);
        assert_eq!(owa(10.0, 1.0, 20.0, 2.0).unwrap(), 0.5);
        assert!(owa(1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn mape_nd_examples() {
        assert_eq!(mape(&[2.0], &[2.0]).unwrap(), 0.0);
        assert_eq!(nd(&[2.0], &[2.0]).unwrap(), 0.0);
        assert_eq!(mape(&[2.0], &[1.0]).unwrap(), 50.0);
        assert_eq!(nd(&[2.0], &[1.0]).unwrap(), 0.5);
        assert!(matches!(mape(&[0.0, 1.0], &[1.0, 1.0]), Err(FptError::DegenerateScale(_))));
        assert_eq!(nd(&[0.0, 1.0], &[1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn prf1_examples() {
        let truth = [false, true, true, false];
        let r = prf1(&truth, &truth, false).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));

        let r = prf1(&[false; 4], &truth, false).unwrap();
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.f1, 0.0);
        assert!(r.precision.is_nan());

        let r = prf1(&[false; 4], &[false; 4], false).unwrap();
        assert_eq!(r.f1, 0.0);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn point_adjust_expands_segment() {
        let mut truth = vec![false; 12];
        truth[5..=9].iter_mut().for_each(|t| *t = true);
        let mut pred = vec![false; 12];
        pred[7] = true;
        // Segment-expansion oracle: with one hit inside [5, 9] all five points count.
        let expanded: Vec<usize> = adjust_points(&pred, &truth)
            .iter()
            .enumerate()
            .filter(|(_, p)| **p)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(expanded, vec![5, 6, 7, 8, 9]);
        let r = prf1(&pred, &truth, true).unwrap();
        assert_eq!(r.recall, 1.0);
        let raw = prf1(&pred, &truth, false).unwrap();
        assert_eq!(raw.recall, 0.2);
    }
}
