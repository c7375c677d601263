//! Procedurally generated series used as fixtures and as the donor corpus for
//! synthetic pretraining.

use serde::{Deserialize, Serialize};

use super::{Frequency, TimeSeriesDataset};
use crate::error::{FptError, Result};
use crate::numerics::{Matrix, RandomStream};

/// `offset + amplitude · sin(2π t / period + phase)` plus optional Gaussian noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidSpec {
    pub length: usize,
    pub period: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default = "one_channel")]
    pub channels: usize,
}

fn one() -> f64 {
    1.0
}

fn one_channel() -> usize {
    1
}

impl SinusoidSpec {
    pub fn new(length: usize, period: f64) -> Self {
        Self { length, period, amplitude: 1.0, phase: 0.0, offset: 0.0, noise_std: 0.0, channels: 1 }
    }

    /// Channel `c` is phase-shifted by `c` radians.
    pub fn generate(&self, name: &str, rng: &mut RandomStream) -> Result<TimeSeriesDataset> {
        if self.length == 0 || self.channels == 0 || !(self.period > 0.0) {
            return Err(FptError::InvalidInput(format!("bad sinusoid spec {self:?}")));
        }
        let mut m = Matrix::zeros(self.length, self.channels);
        for c in 0..self.channels {
            for t in 0..self.length {
                let angle = std::f64::consts::TAU * t as f64 / self.period + self.phase + c as f64;
                let mut v = self.offset + self.amplitude * angle.sin();
                if self.noise_std > 0.0 {
                    v += self.noise_std * rng.gaussian();
                }
                m.set(t, c, v);
            }
        }
        TimeSeriesDataset::new(name, m, Frequency::Hourly)
    }
}

/// Sinusoid with `count` spikes of `magnitude` series standard deviations
/// injected at distinct timesteps of the test segment; returns the dataset with
/// per-timestep 0/1 labels.
pub fn sinusoid_with_spikes(
    spec: &SinusoidSpec,
    count: usize,
    magnitude: f64,
    rng: &mut RandomStream,
) -> Result<TimeSeriesDataset> {
    let mut d = spec.generate("spiky_sinusoid", rng)?;
    let (test_start, end) = d.segment(super::Split::Test);
    if end - test_start < count {
        return Err(FptError::InsufficientData("test segment shorter than spike count".into()));
    }
    let series = d.channel(0);
    let (_, var) = crate::numerics::mean_var(&series);
    let sigma = var.sqrt();
    let mut labels = vec![0i64; d.len()];
    for idx in rng.sample_indices(end - test_start, count) {
        let t = test_start + idx;
        let sign = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
        let v = d.values.get(t, 0) + sign * magnitude * sigma;
        d.values.set(t, 0, v);
        labels[t] = 1;
    }
    d.with_labels(labels)
}

/// `n_series` columns of length `len`; even-labelled columns are sine waves,
/// odd-labelled ones square waves, with random period, phase and amplitude.
pub fn sine_square_corpus(n_series: usize, len: usize, noise_std: f64, rng: &mut RandomStream) -> Result<TimeSeriesDataset> {
    let mut m = Matrix::zeros(len, n_series);
    let mut labels = Vec::with_capacity(n_series);
    for c in 0..n_series {
        let label = (c % 2) as i64;
        let period = rng.uniform_range(8.0, 32.0);
        let phase = rng.uniform_range(0.0, std::f64::consts::TAU);
        let amp = rng.uniform_range(0.5, 2.0);
        for t in 0..len {
            let s = (std::f64::consts::TAU * t as f64 / period + phase).sin();
            let v = if label == 0 { s } else { s.signum() };
            m.set(t, c, amp * v + noise_std * rng.gaussian());
        }
        labels.push(label);
    }
    TimeSeriesDataset::new("sine_square", m, Frequency::Unknown)?.with_labels(labels)
}

/// Donor corpus for synthetic pretraining: each column mixes two sinusoids
/// of random period with a random linear trend.
pub fn donor_corpus(n_series: usize, len: usize, rng: &mut RandomStream) -> Result<TimeSeriesDataset> {
    let mut m = Matrix::zeros(len, n_series);
    for c in 0..n_series {
        let p1 = rng.uniform_range(6.0, 60.0);
        let p2 = rng.uniform_range(6.0, 60.0);
        let a1 = rng.uniform_range(0.5, 2.0);
        let a2 = rng.uniform_range(0.0, 1.0);
        let ph1 = rng.uniform_range(0.0, std::f64::consts::TAU);
        let ph2 = rng.uniform_range(0.0, std::f64::consts::TAU);
        let slope = rng.uniform_range(-1e-3, 1e-3);
        for t in 0..len {
            let tf = t as f64;
            let v = a1 * (std::f64::consts::TAU * tf / p1 + ph1).sin()
                + a2 * (std::f64::consts::TAU * tf / p2 + ph2).sin()
                + slope * tf
                + 0.05 * rng.gaussian();
            m.set(t, c, v);
        }
    }
    TimeSeriesDataset::new("donor", m, Frequency::Unknown)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;

    #[test]
    fn sinusoid_is_deterministic_and_periodic() {
        let spec = SinusoidSpec::new(100, 24.0);
        let a = spec.generate("s", &mut RandomStream::new(1)).unwrap();
        let b = spec.generate("s", &mut RandomStream::new(2)).unwrap();
        assert_eq!(a, b);
        assert!((a.values.get(10, 0) - a.values.get(34, 0)).abs() < 1e-12);
    }

    #[test]
    fn spikes_land_in_test_segment() {
        let spec = SinusoidSpec::new(1000, 24.0);
        let d = sinusoid_with_spikes(&spec, 20, 10.0, &mut RandomStream::new(3)).unwrap();
        let labels = d.labels.as_ref().unwrap();
        assert_eq!(labels.iter().sum::<i64>(), 20);
        let (test_start, _) = d.segment(Split::Test);
        assert!(labels[..test_start].iter().all(|l| *l == 0));
    }

    #[test]
    fn corpus_labels_alternate() {
        let d = sine_square_corpus(10, 64, 0.0, &mut RandomStream::new(4)).unwrap();
        assert_eq!(d.labels.unwrap(), vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
    }
}
