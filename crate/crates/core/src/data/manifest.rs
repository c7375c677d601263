use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::csv::{parse_csv, CsvSchema, TimestampColumn};
use super::{Frequency, SplitSpec, TimeSeriesDataset};
use crate::error::{FptError, Result};

/// One dataset entry of a manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// CSV path; relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub frequency: Frequency,
    #[serde(default)]
    pub seasonal_period: Option<usize>,
    #[serde(default)]
    pub split: Option<SplitSpec>,
    #[serde(default)]
    pub label_column: Option<String>,
    /// Per-series class labels, one per value column (classification).
    #[serde(default)]
    pub series_labels: Option<Vec<i64>>,
    #[serde(default)]
    pub timestamp: TimestampColumn,
}

/// Dataset manifest: a JSON object mapping dataset name to its entry.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetManifest {
    pub datasets: BTreeMap<String, ManifestEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let manifest: DatasetManifest =
            serde_json::from_str(text).map_err(|e| FptError::Format(format!("dataset manifest: {e}")))?;
        for (name, entry) in &manifest.datasets {
            if let Some(split) = &entry.split {
                split.validate().map_err(|e| FptError::Format(format!("dataset {name:?}: {e}")))?;
            }
            if entry.seasonal_period == Some(0) {
                return Err(FptError::Format(format!("dataset {name:?}: seasonal_period must be positive")));
            }
        }
        Ok(manifest)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut manifest = Self::from_json_str(&text)?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn entry(&self, name: &str) -> Result<&ManifestEntry> {
        self.datasets
            .get(name)
            .ok_or_else(|| FptError::InvalidInput(format!("dataset {name:?} not in manifest")))
    }

    pub fn schema(&self, name: &str) -> Result<CsvSchema> {
        let entry = self.entry(name)?;
        Ok(CsvSchema {
            name: name.to_owned(),
            timestamp: entry.timestamp,
            label_column: entry.label_column.clone(),
            frequency: entry.frequency,
            seasonal_period: entry.seasonal_period,
            split: entry.split.unwrap_or_default(),
        })
    }

    pub fn resolve_path(&self, name: &str) -> Result<PathBuf> {
        let entry = self.entry(name)?;
        Ok(if entry.path.is_absolute() { entry.path.clone() } else { self.base_dir.join(&entry.path) })
    }

    /// Reads and parses the named dataset.
    pub fn open(&self, name: &str) -> Result<TimeSeriesDataset> {
        let text = std::fs::read_to_string(self.resolve_path(name)?)?;
        self.open_from_str(name, &text)
    }

    /// Parses already-read CSV text with the named entry's schema.
    pub fn open_from_str(&self, name: &str, csv_text: &str) -> Result<TimeSeriesDataset> {
        let entry = self.entry(name)?;
        let ds = parse_csv(csv_text, &self.schema(name)?)?;
        match &entry.series_labels {
            Some(labels) => {
                if labels.len() != ds.n_channels() {
                    return Err(FptError::Format(format!(
                        "dataset {name:?}: {} series labels for {} columns",
                        labels.len(),
                        ds.n_channels()
                    )));
                }
                ds.with_labels(labels.clone())
            }
            None => Ok(ds),
        }
    }
}
