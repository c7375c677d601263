use serde::{Deserialize, Serialize};

use crate::error::{FptError, Result};
use crate::numerics::Matrix;

/// Sampling frequency of a series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Yearly,
    Quarterly,
    Monthly,
    Weekly,
    Daily,
    Hourly,
    Minutely,
    Unknown,
}

impl Frequency {
    /// Seasonal period used by MASE (M4 competition convention).
    pub fn seasonal_period(self) -> usize {
        match self {
            Frequency::Yearly => 1,
            Frequency::Quarterly => 4,
            Frequency::Monthly => 12,
            Frequency::Weekly => 1,
            Frequency::Daily => 7,
            Frequency::Hourly => 24,
            Frequency::Minutely | Frequency::Unknown => 1,
        }
    }
}

/// Train/validation/test fractions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train: 0.7, val: 0.1, test: 0.2 }
    }
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let spec = Self { train, val, test };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(FptError::InvalidInput(format!("split fractions out of [0,1]: {parts:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(FptError::InvalidInput(format!("split fractions must sum to 1: {parts:?}")));
        }
        Ok(())
    }

    /// Chronological boundaries for a series of length `t`.
    pub fn bounds(&self, t: usize) -> SplitBounds {
        let train_end = (t as f64 * self.train).floor() as usize;
        let val_end = (train_end + (t as f64 * self.val).floor() as usize).min(t);
        SplitBounds { train_start: 0, train_end, val_start: train_end, val_end, len: t }
    }
}

/// Chronological split segments `[train_start, train_end)`,
/// `[val_start, val_end)` and `[val_end, len)`.
///
/// Normally `train_start == 0` and `val_start == train_end`. Few-shot
/// subsetting shrinks the training segment; the excluded timesteps remain in
/// the series and may serve as look-back context for later windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBounds {
    pub train_start: usize,
    pub train_end: usize,
    pub val_start: usize,
    pub val_end: usize,
    pub len: usize,
}

impl SplitBounds {
    pub fn train_len(&self) -> usize {
        self.train_end - self.train_start
    }

    pub fn val_len(&self) -> usize {
        self.val_end - self.val_start
    }

    pub fn test_len(&self) -> usize {
        self.len - self.val_end
    }
}

/// Which chronological segment to draw windows from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    /// The whole series, ignoring split boundaries.
    All,
}

/// Multivariate series, `T` timesteps by `C` channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesDataset {
    pub name: String,
    pub values: Matrix,
    pub frequency: Frequency,
    pub seasonal_period: usize,
    /// One label per series (column) for classification, or one 0/1 label per
    /// timestep for anomaly detection.
    pub labels: Option<Vec<i64>>,
    pub bounds: SplitBounds,
}

impl TimeSeriesDataset {
    /// Builds a dataset with the default 0.7/0.1/0.2 split.
    pub fn new(name: impl Into<String>, values: Matrix, frequency: Frequency) -> Result<Self> {
        Self::with_split(name, values, frequency, SplitSpec::default())
    }

    pub fn with_split(
        name: impl Into<String>,
        values: Matrix,
        frequency: Frequency,
        split: SplitSpec,
    ) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(FptError::InvalidInput("dataset needs T >= 1 and C >= 1".into()));
        }
        split.validate()?;
        let bounds = split.bounds(values.rows());
        Ok(Self {
            name: name.into(),
            frequency,
            seasonal_period: frequency.seasonal_period(),
            labels: None,
            bounds,
            values,
        })
    }

    /// Univariate dataset from a slice.
    pub fn univariate(name: impl Into<String>, series: &[f64], frequency: Frequency) -> Result<Self> {
        Self::new(name, Matrix::new(series.len(), 1, series.to_vec())?, frequency)
    }

    pub fn with_labels(mut self, labels: Vec<i64>) -> Result<Self> {
        let n = labels.len();
        if n != self.n_channels() && n != self.len() {
            return Err(FptError::InvalidInput(format!(
                "{n} labels fit neither {} series nor {} timesteps",
                self.n_channels(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_seasonal_period(mut self, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(FptError::InvalidInput("seasonal period must be positive".into()));
        }
        self.seasonal_period = m;
        Ok(self)
    }

    pub fn with_split_spec(mut self, split: SplitSpec) -> Result<Self> {
        split.validate()?;
        self.bounds = split.bounds(self.len());
        Ok(self)
    }

    /// Number of timesteps `T`.
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of channels `C`.
    pub fn n_channels(&self) -> usize {
        self.values.cols()
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.values.col(c)
    }

    /// Index range `[start, end)` of a split segment.
    pub fn segment(&self, split: Split) -> (usize, usize) {
        let b = &self.bounds;
        match split {
            Split::Train => (b.train_start, b.train_end),
            Split::Val => (b.val_start, b.val_end),
            Split::Test => (b.val_end, b.len),
            Split::All => (0, b.len),
        }
    }

    /// Z-scores every channel with statistics of its training segment.
    pub fn standardized(&self) -> Result<Self> {
        let (s, e) = self.segment(Split::Train);
        if e <= s {
            return Err(FptError::InsufficientData("empty training segment".into()));
        }
        let mut out = self.clone();
        for c in 0..self.n_channels() {
            let train: Vec<f64> = (s..e).map(|t| self.values.get(t, c)).collect();
            let (mean, var) = crate::numerics::mean_var(&train);
            let std = if var > 0.0 { var.sqrt() } else { 1.0 };
            for t in 0..self.len() {
                out.values.set(t, c, (self.values.get(t, c) - mean) / std);
            }
        }
        Ok(out)
    }
}

/// One univariate dataset per channel, in channel order, sharing metadata.
pub fn channel_split(d: &TimeSeriesDataset) -> Vec<TimeSeriesDataset> {
    if d.n_channels() == 1 {
        return vec![d.clone()];
    }
    (0..d.n_channels())
        .map(|c| {
            let col = d.channel(c);
            TimeSeriesDataset {
                name: format!("{}[{c}]", d.name),
                values: Matrix::new(col.len(), 1, col).expect("column of a valid matrix"),
                frequency: d.frequency,
                seasonal_period: d.seasonal_period,
                // Per-timestep labels apply to every channel; per-series labels
                // pick out this column's entry.
                labels: d.labels.as_ref().map(|l| {
                    if l.len() == d.len() {
                        l.clone()
                    } else {
                        vec![l[c]]
                    }
                }),
                bounds: d.bounds,
            }
        })
        .collect()
}

/// Which end of the training segment a few-shot subset keeps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetPosition {
    #[default]
    Suffix,
    Prefix,
}

/// Keeps the most recent `ceil(percent · train_len)` training timesteps.
/// Validation and test segments are untouched.
pub fn few_shot_subset(d: &TimeSeriesDataset, percent: f64) -> Result<TimeSeriesDataset> {
    few_shot_subset_at(d, percent, SubsetPosition::Suffix)
}

pub fn few_shot_subset_at(
    d: &TimeSeriesDataset,
    percent: f64,
    position: SubsetPosition,
) -> Result<TimeSeriesDataset> {
    if !(percent > 0.0 && percent <= 1.0) {
        return Err(FptError::InvalidInput(format!("few-shot percent must be in (0,1], got {percent}")));
    }
    let train_len = d.bounds.train_len();
    // The small slack keeps products such as 0.1 · 10000 from rounding up.
    let keep = ((percent * train_len as f64) - 1e-9).ceil().max(0.0) as usize;
    let keep = keep.min(train_len);
    let mut out = d.clone();
    match position {
        SubsetPosition::Suffix => out.bounds.train_start = d.bounds.train_end - keep,
        SubsetPosition::Prefix => out.bounds.train_end = d.bounds.train_start + keep,
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(t: usize, c: usize) -> TimeSeriesDataset {
        let m = Matrix::from_fn(t, c, |i, j| (i * 10 + j) as f64);
        TimeSeriesDataset::new("ramp", m, Frequency::Hourly).unwrap()
    }

    #[test]
    fn splits_are_disjoint_and_exhaustive() {
        for t in [1, 7, 10, 101, 17420] {
            let d = ramp(t, 1);
            let (a0, a1) = d.segment(Split::Train);
            let (b0, b1) = d.segment(Split::Val);
            let (c0, c1) = d.segment(Split::Test);
            assert_eq!(a0, 0);
            assert_eq!(a1, b0);
            assert_eq!(b1, c0);
            assert_eq!(c1, t);
        }
    }

    #[test]
    fn channel_split_round_trip() {
        let d = ramp(20, 7);
        let parts = channel_split(&d);
        assert_eq!(parts.len(), 7);
        let cols: Vec<Matrix> = parts.iter().map(|p| p.values.clone()).collect();
        assert_eq!(Matrix::hstack(&cols).unwrap(), d.values);
        let single = ramp(5, 1);
        assert_eq!(channel_split(&single), vec![single]);
    }

    #[test]
    fn few_shot_lengths() {
        let m = Matrix::zeros(10000, 1);
        let d = TimeSeriesDataset::with_split("x", m, Frequency::Hourly, SplitSpec::new(1.0, 0.0, 0.0).unwrap())
            .unwrap();
        assert_eq!(few_shot_subset(&d, 0.10).unwrap().bounds.train_len(), 1000);
        assert_eq!(few_shot_subset(&d, 1.0).unwrap(), d);

        let m = Matrix::zeros(17420, 1);
        let d = TimeSeriesDataset::new("etth", m, Frequency::Hourly).unwrap();
        assert_eq!(d.bounds.train_len(), 12194);
        let sub = few_shot_subset(&d, 0.05).unwrap();
        assert_eq!(sub.bounds.train_len(), 610);
        assert_eq!(sub.bounds.train_end, d.bounds.train_end);
        assert_eq!(sub.bounds.val_end, d.bounds.val_end);
    }

    #[test]
    fn few_shot_prefix_keeps_earliest() {
        let d = ramp(1000, 1);
        let sub = few_shot_subset_at(&d, 0.1, SubsetPosition::Prefix).unwrap();
        assert_eq!(sub.bounds.train_start, 0);
        assert_eq!(sub.bounds.train_len(), 70);
        assert_eq!(sub.segment(Split::Val), d.segment(Split::Val));
    }

    #[test]
    fn few_shot_rejects_bad_percent() {
        let d = ramp(100, 1);
        assert!(few_shot_subset(&d, 0.0).is_err());
        assert!(few_shot_subset(&d, 1.5).is_err());
    }

    #[test]
    fn standardized_uses_train_stats() {
        let d = ramp(100, 2).standardized().unwrap();
        let (s, e) = d.segment(Split::Train);
        for c in 0..2 {
            let train: Vec<f64> = (s..e).map(|t| d.values.get(t, c)).collect();
            let (mean, var) = crate::numerics::mean_var(&train);
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }
}
