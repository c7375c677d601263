use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{Frequency, SplitSpec, TimeSeriesDataset};
use crate::error::{FptError, Result};
use crate::numerics::Matrix;

/// Whether the leading CSV column holds timestamps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimestampColumn {
    /// Detect from the header name (`date`, `time`, `timestamp`, `datetime`,
    /// `ds`, `index`) or from a non-numeric first cell.
    #[default]
    Auto,
    First,
    None,
}

/// How to interpret a CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub name: String,
    #[serde(default)]
    pub timestamp: TimestampColumn,
    /// Column holding one integer label per timestep (anomaly ground truth).
    #[serde(default)]
    pub label_column: Option<String>,
    #[serde(default = "unknown_frequency")]
    pub frequency: Frequency,
    #[serde(default)]
    pub seasonal_period: Option<usize>,
    #[serde(default)]
    pub split: SplitSpec,
}

fn unknown_frequency() -> Frequency {
    Frequency::Unknown
}

impl CsvSchema {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            timestamp: TimestampColumn::Auto,
            label_column: None,
            frequency: Frequency::Unknown,
            seasonal_period: None,
            split: SplitSpec::default(),
        }
    }
}

const TIMESTAMP_NAMES: &[&str] = &["date", "time", "timestamp", "datetime", "ds", "index"];

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<TimeSeriesDataset> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_csv(&text, schema)
}

/// Parses CSV text (one header row, comma-separated) into a dataset.
pub fn parse_csv(text: &str, schema: &CsvSchema) -> Result<TimeSeriesDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| FptError::Format(format!("header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(FptError::Format("missing header row".into()));
    }

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| FptError::Format(format!("row {}: {e}", i + 1)))?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(FptError::Format("no data rows".into()));
    }

    let has_timestamp = match schema.timestamp {
        TimestampColumn::First => true,
        TimestampColumn::None => false,
        TimestampColumn::Auto => {
            TIMESTAMP_NAMES.contains(&headers[0].to_ascii_lowercase().as_str())
                || records[0].get(0).is_some_and(|c| c.parse::<f64>().is_err())
        }
    };
    let label_idx = match &schema.label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| FptError::Format(format!("label column {name:?} not found")))?,
        ),
        None => None,
    };
    let first_value = usize::from(has_timestamp);
    let value_cols: Vec<usize> = (first_value..headers.len()).filter(|c| Some(*c) != label_idx).collect();
    if value_cols.is_empty() {
        return Err(FptError::Format("no value columns".into()));
    }
    if has_timestamp && label_idx == Some(0) {
        return Err(FptError::Format("label column cannot be the timestamp column".into()));
    }

    let t = records.len();
    let mut data = Vec::with_capacity(t * value_cols.len());
    let mut labels = label_idx.map(|_| Vec::with_capacity(t));
    let mut previous: Option<Timestamp> = None;
    for (i, rec) in records.iter().enumerate() {
        let row = i + 1;
        if has_timestamp {
            let cell = rec.get(0).unwrap_or("");
            let ts = Timestamp::parse(cell)
                .ok_or_else(|| FptError::Format(format!("row {row}, col {:?}: bad timestamp {cell:?}", headers[0])))?;
            if let Some(prev) = previous {
                if !prev.precedes(&ts)? {
                    return Err(FptError::Format(format!(
                        "row {row}: timestamps are not strictly increasing"
                    )));
                }
            }
            previous = Some(ts);
        }
        for &c in &value_cols {
            let cell = rec.get(c).unwrap_or("");
            data.push(parse_cell(cell, row, &headers[c])?);
        }
        if let (Some(li), Some(out)) = (label_idx, labels.as_mut()) {
            let cell = rec.get(li).unwrap_or("");
            let v = cell.parse::<i64>().map_err(|_| {
                FptError::Format(format!("row {row}, col {:?}: bad label {cell:?}", headers[li]))
            })?;
            out.push(v);
        }
    }

    let values = Matrix::new(t, value_cols.len(), data)?;
    let mut ds = TimeSeriesDataset::with_split(&schema.name, values, schema.frequency, schema.split)?;
    if let Some(m) = schema.seasonal_period {
        ds = ds.with_seasonal_period(m)?;
    }
    if let Some(l) = labels {
        ds = ds.with_labels(l)?;
    }
    Ok(ds)
}

fn parse_cell(cell: &str, row: usize, col: &str) -> Result<f64> {
    if cell.is_empty() {
        return Err(FptError::Format(format!("row {row}, col {col:?}: missing value")));
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(FptError::Format(format!("row {row}, col {col:?}: non-finite value {cell:?}"))),
        Err(_) => Err(FptError::Format(format!("row {row}, col {col:?}: cannot parse {cell:?}"))),
    }
}

#[derive(Clone, Copy, Debug)]
enum Timestamp {
    Index(i64),
    Time(NaiveDateTime),
}

impl Timestamp {
    fn parse(s: &str) -> Option<Self> {
        if let Ok(i) = s.parse::<i64>() {
            return Some(Timestamp::Index(i));
        }
        if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
            return Some(Timestamp::Time(dt.naive_utc()));
        }
        for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"] {
            if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
                return Some(Timestamp::Time(dt));
            }
        }
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .ok()
            .and_then(|d| d.and_hms_opt(0, 0, 0))
            .map(Timestamp::Time)
    }

    fn precedes(&self, next: &Timestamp) -> Result<bool> {
        match (self, next) {
            (Timestamp::Index(a), Timestamp::Index(b)) => Ok(a < b),
            (Timestamp::Time(a), Timestamp::Time(b)) => Ok(a < b),
            _ => Err(FptError::Format("mixed timestamp kinds".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> CsvSchema {
        CsvSchema::named("t")
    }

    #[test]
    fn plain_numeric_columns() {
        let d = parse_csv("a,b\n1,2\n3,4\n5,6\n", &schema()).unwrap();
        assert_eq!((d.len(), d.n_channels()), (3, 2));
        assert_eq!(d.values.row(2), &[5.0, 6.0]);
    }

    #[test]
    fn timestamp_column_is_dropped() {
        let text = "date,a,b\n2016-07-01 00:00:00,1,2\n2016-07-01 01:00:00,3,4\n";
        let d = parse_csv(text, &schema()).unwrap();
        assert_eq!(d.n_channels(), 2);
        let d = parse_csv("date,a\n2020-01-01,1\n2020-01-02,2\n", &schema()).unwrap();
        assert_eq!(d.n_channels(), 1);
    }

    #[test]
    fn integer_index_timestamps() {
        let mut s = schema();
        s.timestamp = TimestampColumn::First;
        let d = parse_csv("t,x\n0,1\n1,2\n5,3\n", &s).unwrap();
        assert_eq!(d.n_channels(), 1);
        let err = parse_csv("t,x\n0,1\n2,2\n1,3\n", &s).unwrap_err();
        assert!(matches!(err, FptError::Format(m) if m.contains("row 3")));
    }

    #[test]
    fn nan_and_missing_cells_rejected() {
        let err = parse_csv("a,b\n1,NaN\n", &schema()).unwrap_err();
        assert!(matches!(&err, FptError::Format(m) if m.contains("row 1") && m.contains("\"b\"")), "{err}");
        assert!(matches!(parse_csv("a,b\n1,\n", &schema()), Err(FptError::Format(_))));
        assert!(matches!(parse_csv("a,b\n1,x\n", &schema()), Err(FptError::Format(_))));
        assert!(matches!(parse_csv("a,b\n1\n", &schema()), Err(FptError::Format(_))));
    }

    #[test]
    fn non_monotone_dates_rejected() {
        let text = "date,a\n2020-01-02,1\n2020-01-01,2\n";
        assert!(matches!(parse_csv(text, &schema()), Err(FptError::Format(_))));
    }

    #[test]
    fn label_column_becomes_per_timestep_labels() {
        let mut s = schema();
        s.label_column = Some("label".into());
        let d = parse_csv("x,label\n1,0\n2,1\n3,0\n", &s).unwrap();
        assert_eq!(d.n_channels(), 1);
        assert_eq!(d.labels, Some(vec![0, 1, 0]));
    }
}
