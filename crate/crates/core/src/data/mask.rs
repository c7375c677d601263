use serde::{Deserialize, Serialize};

use crate::error::{FptError, Result};
use crate::numerics::{Matrix, RandomStream};

/// Observation mask over a window: 1 observed, 0 masked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationMask {
    pub mask: Matrix,
    pub ratio: f64,
}

impl ImputationMask {
    pub fn masked_count(&self) -> usize {
        self.mask.data().iter().filter(|v| **v == 0.0).count()
    }

    pub fn realized_ratio(&self) -> f64 {
        self.masked_count() as f64 / self.mask.data().len() as f64
    }
}

/// Masks exactly `round(ratio · n_steps · n_channels)` entries, chosen
/// uniformly without replacement.
pub fn random_mask(n_steps: usize, n_channels: usize, ratio: f64, rng: &mut RandomStream) -> Result<ImputationMask> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(FptError::InvalidInput(format!("mask ratio must be in (0,1), got {ratio}")));
    }
    let total = n_steps * n_channels;
    let k = (ratio * total as f64).round() as usize;
    let mut mask = Matrix::from_fn(n_steps, n_channels, |_, _| 1.0);
    for idx in rng.sample_indices(total, k) {
        mask.data_mut()[idx] = 0.0;
    }
    Ok(ImputationMask { mask, ratio })
}
