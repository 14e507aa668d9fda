//! Aggregating metric reports from repeated runs into a comparison table:
//! per (method, budget) cell the median with +max/-min offsets, the layout
//! used for reporting performance over many seeds.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::stats;

const METRIC_KEYS: [&str; 3] = ["agreement", "total_variation", "w2"];

/// Aggregate of one metric in one (method, budget) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonCell {
    pub method: String,
    pub budget: u64,
    pub metric: String,
    pub median: f64,
    /// Offset up to the maximum: `max - median`.
    pub plus: f64,
    /// Offset down to the minimum: `median - min`.
    pub minus: f64,
    pub runs: usize,
}

impl ComparisonCell {
    /// `median^{+plus}_{-minus}` with fixed 6-decimal formatting.
    pub fn formatted(&self) -> String {
        format!(
            "{:.6}^{{+{:.6}}}_{{-{:.6}}}",
            self.median, self.plus, self.minus
        )
    }
}

/// The full comparison across methods and budgets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub cells: Vec<ComparisonCell>,
}

impl ComparisonTable {
    pub fn plain_text(&self) -> String {
        let mut out = String::from("method  budget  metric           value\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{:<7} {:<7} {:<16} {}\n",
                c.method,
                c.budget,
                c.metric,
                c.formatted()
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("comparison serialization: {e}")))
    }
}

/// Reads metric reports and aggregates them per (method, budget) cell.
///
/// Every report must carry the same set of metric keys; mixing classification
/// and regression reports is an error.
pub fn compare_runs<P: AsRef<Path>>(report_paths: &[P]) -> Result<ComparisonTable> {
    if report_paths.is_empty() {
        return Err(Error::InvalidConfig(
            "compare needs at least one report".into(),
        ));
    }

    let mut metric_set: Option<Vec<String>> = None;
    // (method, budget) -> metric -> values
    let mut groups: std::collections::BTreeMap<(String, u64), Vec<MetricsReport>> =
        Default::default();

    for path in report_paths {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let report = MetricsReport::read(std::io::BufReader::new(file))?;
        let present: Vec<String> = METRIC_KEYS
            .iter()
            .filter(|k| report.get(k).is_some())
            .map(|k| k.to_string())
            .collect();
        if present.is_empty() {
            return Err(Error::Format(format!(
                "{}: report carries no metric keys",
                path.display()
            )));
        }
        match &metric_set {
            None => metric_set = Some(present),
            Some(expected) => {
                if expected != &present {
                    return Err(Error::InvalidConfig(format!(
                        "{}: mixed metric sets ({present:?} vs {expected:?})",
                        path.display()
                    )));
                }
            }
        }
        let method = report
            .get("method")
            .ok_or_else(|| Error::Format(format!("{}: missing method key", path.display())))?
            .to_string();
        let budget: u64 = report
            .get("budget")
            .ok_or_else(|| Error::Format(format!("{}: missing budget key", path.display())))?
            .parse()
            .map_err(|_| Error::Format(format!("{}: bad budget value", path.display())))?;
        groups.entry((method, budget)).or_default().push(report);
    }

    let metric_set = metric_set.unwrap();
    let mut cells = Vec::new();
    for ((method, budget), reports) in groups {
        for metric in &metric_set {
            let values: Vec<f64> = reports
                .iter()
                .map(|r| {
                    r.get_f64(metric).ok_or_else(|| {
                        Error::Format(format!("report missing numeric {metric} value"))
                    })
                })
                .collect::<Result<_>>()?;
            let median = stats::median(&values);
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            cells.push(ComparisonCell {
                method: method.clone(),
                budget,
                metric: metric.clone(),
                median,
                plus: max - median,
                minus: median - min,
                runs: values.len(),
            });
        }
    }
    Ok(ComparisonTable { cells })
}
