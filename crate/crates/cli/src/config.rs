//! Run configuration files.

use std::path::{Path, PathBuf};

use fpt_core::data::synthetic::{donor_corpus, sine_square_corpus, sinusoid_with_spikes, SinusoidSpec};
use fpt_core::data::{DatasetManifest, TimeSeriesDataset};
use fpt_core::numerics::RandomStream;
use fpt_core::tasks::{AnomalyOptions, DonorSpec, TaskSetup, TaskSpec, WindowShape, ZeroShotMetric};
use fpt_core::{FptError, Result};
use serde::{Deserialize, Serialize};

/// Where a run's series come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// A named entry of a dataset manifest.
    Manifest { path: PathBuf, name: String },
    Sinusoid {
        spec: SinusoidSpec,
        #[serde(default)]
        seed: u64,
    },
    /// Sinusoid with labelled spikes in the test segment.
    SpikySinusoid {
        spec: SinusoidSpec,
        count: usize,
        magnitude: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Labelled sine versus square wave series, one per column.
    SineSquare {
        n_series: usize,
        length: usize,
        #[serde(default)]
        noise_std: f64,
        #[serde(default)]
        seed: u64,
    },
    Donor {
        n_series: usize,
        length: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl DatasetSource {
    fn resolve(&mut self, base: &Path) {
        if let DatasetSource::Manifest { path, .. } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    fn check_paths(&self) -> Result<()> {
        if let DatasetSource::Manifest { path, .. } = self {
            if !path.is_file() {
                return Err(FptError::InvalidInput(format!("manifest {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn load(&self) -> Result<TimeSeriesDataset> {
        match self {
            DatasetSource::Manifest { path, name } => DatasetManifest::load(path)?.open(name),
            DatasetSource::Sinusoid { spec, seed } => spec.generate("sinusoid", &mut RandomStream::new(*seed)),
            DatasetSource::SpikySinusoid { spec, count, magnitude, seed } => {
                sinusoid_with_spikes(spec, *count, *magnitude, &mut RandomStream::new(*seed))
            }
            DatasetSource::SineSquare { n_series, length, noise_std, seed } => {
                sine_square_corpus(*n_series, *length, *noise_std, &mut RandomStream::new(*seed))
            }
            DatasetSource::Donor { n_series, length, seed } => donor_corpus(*n_series, *length, &mut RandomStream::new(*seed)),
        }
    }
}

fn default_fractions() -> Vec<f64> {
    vec![0.05, 0.1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewShotConfig {
    /// Fractions of the training segment, each in (0, 1].
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        Self { fractions: default_fractions() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZeroShotConfig {
    pub target: DatasetSource,
    #[serde(default)]
    pub metric: Option<ZeroShotMetric>,
    /// Target window geometry when it differs from the source's.
    #[serde(default)]
    pub target_shape: Option<WindowShape>,
}

fn default_ablation_fraction() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    #[serde(default = "default_ablation_fraction")]
    pub fraction: f64,
    /// Donor corpus for `--synthetic-pretrain`.
    #[serde(default)]
    pub donor: DonorSpec,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self { fraction: default_ablation_fraction(), donor: DonorSpec::default() }
    }
}

/// One run: data, task, model and training settings, and where results go.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub task: TaskSpec,
    pub setup: TaskSetup,
    /// Weight container directory; relative to the config file.
    #[serde(default)]
    pub weights: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Overrides `setup.train.seed` when set.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub anomaly: Option<AnomalyOptions>,
    #[serde(default)]
    pub few_shot: Option<FewShotConfig>,
    #[serde(default)]
    pub zero_shot: Option<ZeroShotConfig>,
    #[serde(default)]
    pub ablation: Option<AblationConfig>,
}

impl RunConfig {
    /// Parses and validates everything that needs no file access.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| FptError::Format(format!("run config: {e}")))?;
        cfg.task.validate()?;
        cfg.setup.validate()?;
        if let Some(f) = &cfg.few_shot {
            if f.fractions.is_empty() || f.fractions.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
                return Err(FptError::InvalidInput(format!("few-shot fractions must lie in (0, 1], got {:?}", f.fractions)));
            }
        }
        if let Some(a) = &cfg.ablation {
            if !(a.fraction > 0.0 && a.fraction <= 1.0) {
                return Err(FptError::InvalidInput(format!("ablation fraction must lie in (0, 1], got {}", a.fraction)));
            }
        }
        Ok(cfg)
    }

    /// Reads a config file, resolves relative paths against its directory
    /// and checks that referenced files exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FptError::InvalidInput(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json_str(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.dataset.resolve(&base);
        if let Some(z) = &mut cfg.zero_shot {
            z.target.resolve(&base);
        }
        for p in [&mut cfg.weights, &mut cfg.output].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.check_paths()?;
        Ok(cfg)
    }

    pub fn check_paths(&self) -> Result<()> {
        self.dataset.check_paths()?;
        if let Some(z) = &self.zero_shot {
            z.target.check_paths()?;
        }
        if let Some(w) = &self.weights {
            if !w.is_dir() {
                return Err(FptError::InvalidInput(format!("weight container {} does not exist", w.display())));
            }
        }
        Ok(())
    }

    /// The setup with the effective seed applied.
    pub fn effective_setup(&self, seed_override: Option<u64>) -> TaskSetup {
        let mut s = self.setup.clone();
        if let Some(seed) = seed_override.or(self.seed) {
            s.train.seed = seed;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "dataset": {"sinusoid": {"spec": {"length": 600, "period": 24}}},
        "task": {"kind": "forecast", "horizon": 24},
        "setup": {"lookback": 96}
    }"#;

    #[test]
    fn minimal_config_parses() {
        let c = RunConfig::from_json_str(MINIMAL).unwrap();
        assert_eq!(c.task, TaskSpec::Forecast { horizon: 24 });
        assert_eq!(c.dataset.load().unwrap().len(), 600);
        assert_eq!(c.effective_setup(Some(9)).train.seed, 9);
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = MINIMAL.replace("\"setup\"", "\"bogus\": 1, \"setup\"");
        assert!(matches!(RunConfig::from_json_str(&bad), Err(FptError::Format(_))));
    }

    #[test]
    fn invalid_task_rejected() {
        let bad = MINIMAL.replace("\"horizon\": 24", "\"horizon\": 0");
        assert!(RunConfig::from_json_str(&bad).is_err());
    }

    #[test]
    fn missing_manifest_is_reported() {
        let text = MINIMAL.replace(
            r#"{"sinusoid": {"spec": {"length": 600, "period": 24}}}"#,
            r#"{"manifest": {"path": "nope.json", "name": "x"}}"#,
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, text).unwrap();
        assert!(matches!(RunConfig::load(&p), Err(FptError::InvalidInput(_))));
    }
}
