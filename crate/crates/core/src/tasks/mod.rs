//! End-to-end runners: forecasting (full, few-shot, zero-shot), imputation,
//! classification, anomaly detection and the ablation arms.
//!
//! Every multivariate dataset is handled channel-independently: each channel
//! is windowed as its own univariate series and all channels share one model.

mod ablation;
mod anomaly;
mod classification;
pub(crate) mod forecast;
mod imputation;
mod train;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use ablation::{make_ablation, run_ablation, synthetic_pretrain, Ablation, AblationRow, DonorSpec};
pub use anomaly::{anomaly_threshold, quantile, run_anomaly, AnomalyOptions};
pub use classification::run_classification;
pub use forecast::{run_few_shot, run_forecast, run_zero_shot, zero_shot_metric_for, WindowShape, ZeroShotMetric};
pub use imputation::run_imputation;
pub use train::{evaluate_loss, predict_all, train_model, TrainLog};

use crate::backbone::{BackboneConfig, IoConfig, ModelConfig, ParameterStore, Pooling};
use crate::error::{FptError, Result};
use crate::metrics::MetricReport;
use crate::preprocess::PatchConfig;

/// Which task a run performs, with exactly the fields that task needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    Forecast { horizon: usize },
    Imputation { ratios: Vec<f64> },
    Classification { n_classes: usize },
    Anomaly {
        #[serde(default = "default_quantile")]
        quantile: f64,
        #[serde(default)]
        point_adjust: bool,
    },
}

fn default_quantile() -> f64 {
    0.99
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::Forecast { .. } => "forecast",
            TaskSpec::Imputation { .. } => "imputation",
            TaskSpec::Classification { .. } => "classification",
            TaskSpec::Anomaly { .. } => "anomaly",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TaskSpec::Forecast { horizon } if *horizon == 0 => {
                Err(FptError::InvalidInput("forecast horizon must be positive".into()))
            }
            TaskSpec::Imputation { ratios } => {
                if ratios.is_empty() || ratios.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
                    return Err(FptError::InvalidInput(format!("mask ratios must lie in (0,1), got {ratios:?}")));
                }
                Ok(())
            }
            TaskSpec::Classification { n_classes } if *n_classes < 2 => {
                Err(FptError::InvalidInput("classification needs at least two classes".into()))
            }
            TaskSpec::Anomaly { quantile, .. } if !(*quantile > 0.0 && *quantile < 1.0) => {
                Err(FptError::InvalidInput(format!("anomaly quantile must lie in (0,1), got {quantile}")))
            }
            _ => Ok(()),
        }
    }
}

/// Optimization settings and the ablation arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_patience")]
    pub early_stop_patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ablation: Ablation,
}

fn default_epochs() -> usize {
    10
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    1e-3
}
fn default_patience() -> usize {
    3
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            early_stop_patience: default_patience(),
            seed: 0,
            ablation: Ablation::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.early_stop_patience == 0 {
            return Err(FptError::InvalidInput("early_stop_patience must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(FptError::InvalidInput("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(FptError::InvalidInput(format!("bad learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Everything a runner needs besides the data and the task itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSetup {
    /// Look-back window length `L`.
    pub lookback: usize,
    /// Step between consecutive training/validation/test windows.
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub patch: PatchConfig,
    #[serde(default)]
    pub backbone: BackboneConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Z-score every channel with its training-segment statistics first.
    #[serde(default = "yes")]
    pub standardize: bool,
    /// Per-window instance normalization around the backbone.
    #[serde(default = "yes")]
    pub revin: bool,
    #[serde(default = "default_revin_eps")]
    pub revin_eps: f64,
    /// Imputation only: feed the observation mask as extra token features.
    #[serde(default)]
    pub mask_channel: bool,
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_revin_eps() -> f64 {
    crate::preprocess::DEFAULT_EPS
}

impl TaskSetup {
    pub fn new(lookback: usize) -> Self {
        Self {
            lookback,
            stride: 1,
            patch: PatchConfig::default(),
            backbone: BackboneConfig::default(),
            train: TrainConfig::default(),
            standardize: true,
            revin: true,
            revin_eps: default_revin_eps(),
            mask_channel: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lookback == 0 || self.stride == 0 {
            return Err(FptError::InvalidInput("lookback and stride must be positive".into()));
        }
        PatchConfig::new(self.patch.patch_len, self.patch.stride)?;
        self.backbone.validate()?;
        self.train.validate()?;
        let n = self.n_patches()?;
        if n > self.backbone.max_tokens {
            return Err(FptError::InvalidInput(format!(
                "{n} patches exceed max_tokens {}",
                self.backbone.max_tokens
            )));
        }
        if !(self.revin_eps >= 0.0) {
            return Err(FptError::InvalidInput("revin_eps must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn n_patches(&self) -> Result<usize> {
        self.patch.n_patches(self.lookback).ok_or_else(|| {
            FptError::InvalidInput(format!(
                "lookback {} is shorter than patch length {}",
                self.lookback, self.patch.patch_len
            ))
        })
    }
}

/// A finished run: its report, the trained model and the training history.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: MetricReport,
    pub model: ModelConfig,
    pub store: ParameterStore,
    pub log: TrainLog,
}

/// Model shape a task's runner builds, before any ablation adjustment.
/// Needed to validate a weight container against the task.
pub fn task_model_config(setup: &TaskSetup, task: &TaskSpec) -> Result<ModelConfig> {
    task.validate()?;
    let n_tokens = setup.n_patches()?;
    let p = setup.patch.patch_len;
    let io = match task {
        TaskSpec::Forecast { horizon } => IoConfig { input_dim: p, pooling: Pooling::Flatten { n_tokens }, out_dim: *horizon },
        TaskSpec::Imputation { .. } => IoConfig {
            input_dim: p * if setup.mask_channel { 2 } else { 1 },
            pooling: Pooling::Flatten { n_tokens },
            out_dim: setup.lookback,
        },
        TaskSpec::Classification { n_classes } => IoConfig { input_dim: p, pooling: Pooling::MeanPool, out_dim: *n_classes },
        TaskSpec::Anomaly { .. } => IoConfig { input_dim: p, pooling: Pooling::Flatten { n_tokens }, out_dim: setup.lookback },
    };
    ModelConfig::new(setup.backbone.clone(), io)
}

/// SHA-256 of the canonical JSON form of a configuration value.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("configuration serializes");
    hex::encode(Sha256::digest(json))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_spec_json_has_only_its_fields() {
        let t: TaskSpec = serde_json::from_str(r#"{"kind":"forecast","horizon":24}"#).unwrap();
        assert_eq!(t, TaskSpec::Forecast { horizon: 24 });
        assert!(serde_json::from_str::<TaskSpec>(r#"{"kind":"forecast","horizon":24,"ratios":[0.5]}"#).is_err());
        let a: TaskSpec = serde_json::from_str(r#"{"kind":"anomaly"}"#).unwrap();
        assert_eq!(a, TaskSpec::Anomaly { quantile: 0.99, point_adjust: false });
        assert!(TaskSpec::Classification { n_classes: 1 }.validate().is_err());
        assert!(TaskSpec::Imputation { ratios: vec![0.0] }.validate().is_err());
    }

    #[test]
    fn setup_rejects_too_many_patches() {
        let mut s = TaskSetup::new(96);
        s.validate().unwrap();
        s.backbone.max_tokens = 8;
        assert!(s.validate().is_err());
        s.backbone.max_tokens = 64;
        s.train.early_stop_patience = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn task_model_config_matches_forecast_shape() {
        let s = TaskSetup::new(96);
        let a = task_model_config(&s, &TaskSpec::Forecast { horizon: 24 }).unwrap();
        assert_eq!(a, forecast::forecast_model_config(&s, 24).unwrap());
        let c = task_model_config(&s, &TaskSpec::Classification { n_classes: 3 }).unwrap();
        assert_eq!((c.io.pooling, c.io.out_dim), (Pooling::MeanPool, 3));
    }

    #[test]
    fn config_hash_is_stable() {
        let s = TaskSetup::new(96);
        assert_eq!(config_hash(&s), config_hash(&s.clone()));
        let mut t = s.clone();
        t.stride = 2;
        assert_ne!(config_hash(&s), config_hash(&t));
    }
}
