use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cumulative metrics over the first `size` retrieved items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetric {
    pub t: usize,
    pub size: usize,
    pub hr: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub split: String,
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
    pub per_round: Vec<RoundMetric>,
    pub epoch: usize,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Kept out of the serialized form so reports stay reproducible.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl MetricReport {
    pub fn to_json_line(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Invalid(e.to_string()))
    }
}

/// Appends one JSON line per report.
pub fn append_reports(path: impl AsRef<Path>, reports: &[MetricReport]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    for r in reports {
        writeln!(f, "{}", r.to_json_line()?).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_reports(path: impl AsRef<Path>) -> Result<Vec<MetricReport>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
        .collect()
}
