//! Dataset ingestion, chronological splits, windowing, few-shot subsets and
//! imputation masks.

pub mod csv;
mod dataset;
mod manifest;
mod mask;
pub mod synthetic;
mod window;

pub use self::csv::{load_csv, parse_csv, CsvSchema, TimestampColumn};
pub use dataset::{
    channel_split, few_shot_subset, few_shot_subset_at, Frequency, Split, SplitBounds, SplitSpec,
    SubsetPosition, TimeSeriesDataset,
};
pub use manifest::{DatasetManifest, ManifestEntry};
pub use mask::{random_mask, ImputationMask};
pub use window::{make_windows, window_range, Window, WindowSpec};
