use serde::{Deserialize, Serialize};

use super::{Split, TimeSeriesDataset};
use crate::error::{FptError, Result};

/// Look-back length, horizon and stride of sliding windows, in timesteps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub lookback: usize,
    pub horizon: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn new(lookback: usize, horizon: usize, stride: usize) -> Result<Self> {
        let w = Self { lookback, horizon, stride };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lookback == 0 || self.stride == 0 {
            return Err(FptError::InvalidInput(format!(
                "window needs lookback >= 1 and stride >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// `floor((len − L − O) / stride) + 1`, or `None` when `len < L + O`.
    pub fn count(&self, segment_len: usize) -> Option<usize> {
        let span = self.lookback + self.horizon;
        (segment_len >= span).then(|| (segment_len - span) / self.stride + 1)
    }
}

/// One (input, target) pair cut from a single channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub channel: usize,
    /// Series index of the first input timestep.
    pub start: usize,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Timestep range windows for `split` may draw from.
///
/// Training windows stay inside the training segment. Validation and test
/// windows may reach back up to `L` steps into earlier data for their inputs;
/// their targets always lie inside their own segment.
pub fn window_range(d: &TimeSeriesDataset, w: &WindowSpec, split: Split) -> (usize, usize) {
    let (start, end) = d.segment(split);
    match split {
        Split::Val | Split::Test => (start.saturating_sub(w.lookback), end),
        Split::Train | Split::All => (start, end),
    }
}

/// Chronological sliding windows over every channel of `split`.
pub fn make_windows(d: &TimeSeriesDataset, w: &WindowSpec, split: Split) -> Result<Vec<Window>> {
    w.validate()?;
    let (lo, hi) = window_range(d, w, split);
    let len = hi - lo;
    let n = w.count(len).ok_or_else(|| {
        FptError::InsufficientData(format!(
            "{split:?} segment of {len} steps is shorter than lookback {} + horizon {}",
            w.lookback, w.horizon
        ))
    })?;
    let mut out = Vec::with_capacity(n * d.n_channels());
    for c in 0..d.n_channels() {
        let series = d.channel(c);
        for k in 0..n {
            let s = lo + k * w.stride;
            out.push(Window {
                channel: c,
                start: s,
                input: series[s..s + w.lookback].to_vec(),
                target: series[s + w.lookback..s + w.lookback + w.horizon].to_vec(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Frequency, SplitSpec};
    use crate::numerics::Matrix;

    fn series(t: usize) -> TimeSeriesDataset {
        let m = Matrix::from_fn(t, 1, |i, _| i as f64);
        TimeSeriesDataset::with_split("s", m, Frequency::Hourly, SplitSpec::new(1.0, 0.0, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn count_examples() {
        let w = WindowSpec::new(96, 96, 1).unwrap();
        assert_eq!(make_windows(&series(200), &w, Split::Train).unwrap().len(), 9);
        assert_eq!(make_windows(&series(192), &w, Split::Train).unwrap().len(), 1);
        assert!(matches!(make_windows(&series(100), &w, Split::Train), Err(FptError::InsufficientData(_))));
    }

    #[test]
    fn windows_are_contiguous_slices() {
        let w = WindowSpec::new(4, 2, 3).unwrap();
        let wins = make_windows(&series(20), &w, Split::Train).unwrap();
        for win in &wins {
            let s = win.start as f64;
            assert_eq!(win.input, (0..4).map(|i| s + i as f64).collect::<Vec<_>>());
            assert_eq!(win.target, vec![s + 4.0, s + 5.0]);
        }
        assert!(wins.windows(2).all(|p| p[0].start < p[1].start));
    }

    #[test]
    fn test_targets_stay_in_test_segment() {
        let m = Matrix::from_fn(100, 1, |i, _| i as f64);
        let d = TimeSeriesDataset::new("s", m, Frequency::Hourly).unwrap();
        let w = WindowSpec::new(10, 5, 1).unwrap();
        let (test_start, _) = d.segment(Split::Test);
        let wins = make_windows(&d, &w, Split::Test).unwrap();
        assert_eq!(wins[0].start, test_start - 10);
        assert!(wins.iter().all(|x| x.start + 10 >= test_start));
        let (val_start, val_end) = d.segment(Split::Val);
        for x in make_windows(&d, &w, Split::Val).unwrap() {
            assert!(x.start + 10 >= val_start && x.start + 15 <= val_end);
        }
        for x in make_windows(&d, &w, Split::Train).unwrap() {
            assert!(x.start + 15 <= val_start);
        }
    }
}
