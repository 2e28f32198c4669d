use std::collections::BTreeMap;
use std::path::Path;

use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::ap::coco_thresholds;
use super::saliency::{KlDirection, DEFAULT_EPS, DEFAULT_NSS_TAU};
use crate::error::{Error, Result};

/// Renders a float with four decimals.
pub fn fixed4(v: f64) -> String {
    let s = format!("{v:.4}");
    // "-0.0000" reads oddly in reports
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

fn raw(v: f64) -> Box<RawValue> {
    if v.is_finite() {
        RawValue::from_string(fixed4(v)).expect("fixed-point number is valid JSON")
    } else {
        RawValue::from_string("null".into()).expect("null is valid JSON")
    }
}

pub fn ser_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    raw(*v).serialize(s)
}

pub fn ser_opt_f64<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => raw(*v).serialize(s),
        None => s.serialize_none(),
    }
}

pub fn ser_map_f64<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(m.len()))?;
    for (k, v) in m {
        map.serialize_entry(k, &raw(*v))?;
    }
    map.end()
}

/// One metric over categories, with the unweighted category mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub task: String,
    pub metric: String,
    #[serde(serialize_with = "ser_map_f64")]
    pub per_category: BTreeMap<String, f64>,
    /// Mean over categories; absent when there are none.
    #[serde(rename = "AVG", serialize_with = "ser_opt_f64")]
    pub avg: Option<f64>,
    /// Category-mean at each IoU threshold, for AP tables.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty", serialize_with = "ser_map_f64")]
    pub per_threshold: BTreeMap<String, f64>,
}

impl MetricTable {
    pub fn new(task: &str, metric: &str, per_category: BTreeMap<String, f64>) -> Self {
        let mut t = MetricTable {
            task: task.into(),
            metric: metric.into(),
            per_category,
            avg: None,
            per_threshold: BTreeMap::new(),
        };
        t.refresh_avg();
        t
    }

    /// Recomputes the mean, folding categories in name order.
    pub fn refresh_avg(&mut self) {
        self.avg = (!self.per_category.is_empty())
            .then(|| self.per_category.values().sum::<f64>() / self.per_category.len() as f64);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTally {
    pub samples: usize,
    /// Samples without any prediction.
    pub missing: usize,
    /// Predictions with no usable answer; scored as misses.
    pub unparseable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    #[serde(serialize_with = "ser_thresholds")]
    pub iou_thresholds: Vec<f64>,
    pub kld_direction: KlDirection,
    pub eps: f64,
    #[serde(serialize_with = "ser_f64")]
    pub nss_tau: f64,
}

fn ser_thresholds<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let raws: Vec<Box<RawValue>> = v.iter().map(|t| raw(*t)).collect();
    raws.serialize(s)
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            iou_thresholds: coco_thresholds(),
            kld_direction: KlDirection::GtToPred,
            eps: DEFAULT_EPS,
            nss_tau: DEFAULT_NSS_TAU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub settings: EvalSettings,
    pub tables: Vec<MetricTable>,
    pub counts: BTreeMap<String, TaskTally>,
    pub notes: Vec<String>,
}

/// Sorts tables by task and metric and fills in each mean.
pub fn aggregate_report(
    mut tables: Vec<MetricTable>,
    counts: BTreeMap<String, TaskTally>,
    settings: EvalSettings,
    notes: Vec<String>,
) -> EvalReport {
    for t in &mut tables {
        t.refresh_avg();
    }
    tables.sort_by(|a, b| (&a.task, &a.metric).cmp(&(&b.task, &b.metric)));
    EvalReport {
        settings,
        tables,
        counts,
        notes,
    }
}

impl EvalReport {
    pub fn table(&self, task: &str, metric: &str) -> Option<&MetricTable> {
        self.tables.iter().find(|t| t.task == task && t.metric == metric)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// `task,metric,category,value` rows; each table ends with an AVG row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["task", "metric", "category", "value"])
            .expect("in-memory write");
        for t in &self.tables {
            for (c, v) in &t.per_category {
                w.write_record([t.task.as_str(), t.metric.as_str(), c.as_str(), fixed4(*v).as_str()])
                    .expect("in-memory write");
            }
            let avg = t.avg.map(fixed4).unwrap_or_default();
            w.write_record([t.task.as_str(), t.metric.as_str(), "AVG", avg.as_str()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
    }

    /// Writes the JSON report to `path` and the CSV next to it.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::file_io(path, e))?;
        let csv_path = path.with_extension("csv");
        std::fs::write(&csv_path, self.to_csv()).map_err(|e| Error::file_io(&csv_path, e))
    }
}
