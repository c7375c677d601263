use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A metric value; `NaN` marks an undefined metric and serializes as `null`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricValue(pub f64);

impl Serialize for MetricValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_none()
        }
    }
}

impl<'de> Deserialize<'de> for MetricValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(MetricValue(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub scope: String,
    pub metrics: BTreeMap<String, MetricValue>,
}

impl MetricRow {
    pub fn new(scope: impl Into<String>) -> Self {
        Self { scope: scope.into(), metrics: BTreeMap::new() }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.metrics.insert(name.to_owned(), MetricValue(value));
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).map(|v| v.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub task: String,
    pub dataset: String,
    pub seed: u64,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Named metric rows plus run metadata.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn new(task: &str, dataset: &str, seed: u64) -> Self {
        Self {
            metadata: ReportMetadata {
                task: task.to_owned(),
                dataset: dataset.to_owned(),
                seed,
                ..ReportMetadata::default()
            },
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    pub fn row(&self, scope: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.scope == scope)
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        if !self.metadata.warnings.contains(&msg) {
            self.metadata.warnings.push(msg);
        }
    }

    /// Appends (or replaces) the `avg` row: the arithmetic mean over every
    /// other row of each metric those rows report.
    pub fn add_average_row(&mut self) {
        self.rows.retain(|r| r.scope != "avg");
        if self.rows.is_empty() {
            return;
        }
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for row in &self.rows {
            for (name, v) in &row.metrics {
                let e = sums.entry(name.clone()).or_insert((0.0, 0));
                e.0 += v.0;
                e.1 += 1;
            }
        }
        let mut avg = MetricRow::new("avg");
        for (name, (sum, n)) in sums {
            avg.metrics.insert(name, MetricValue(sum / n as f64));
        }
        if avg.metrics.values().any(|v| v.0.is_nan()) {
            self.warn("average row contains undefined (NaN) metrics");
        }
        self.rows.push(avg);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        serde_json::from_str(text).map_err(|e| crate::FptError::Format(format!("metric report: {e}")))
    }

    /// One CSV row per scope; columns are the union of metric names.
    pub fn to_csv(&self) -> String {
        let mut names: Vec<&String> = self.rows.iter().flat_map(|r| r.metrics.keys()).collect();
        names.sort();
        names.dedup();
        let mut out = String::from("scope");
        for n in &names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.scope.replace(',', ";"));
            for n in &names {
                out.push(',');
                match row.metrics.get(*n) {
                    Some(v) if v.0.is_finite() => {
                        let _ = write!(out, "{}", v.0);
                    }
                    Some(_) => out.push_str("NaN"),
                    None => {}
                }
            }
            out.push('\n');
        }
        out
    }
}
