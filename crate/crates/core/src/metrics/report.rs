//! Evaluation reports.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, TaskKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
}

/// Result of evaluating one model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub task: TaskKind,
    pub dataset: String,
    pub model: String,
    pub metrics: Vec<Metric>,
    /// Content hash of `config`.
    pub fingerprint: String,
    pub seed: u64,
    /// The exact serialized run configuration.
    pub config: String,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        if let Some(m) = self.metrics.iter().find(|m| !m.value.is_finite()) {
            return Err(Error::Numeric(format!("metric `{}` is {}", m.name, m.value)));
        }
        Ok(())
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value)
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::InvalidRecord(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text).map_err(|e| Error::InvalidRecord(format!("report: {e}")))?;
        r.validate()?;
        Ok(r)
    }

    /// Flat `task,dataset,metric,value` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidRecord(e.to_string());
        w.write_record(["task", "dataset", "metric", "value"]).map_err(io)?;
        for m in &self.metrics {
            w.write_record([self.task.name(), &self.dataset, &m.name, &m.value.to_string()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidRecord(e.to_string()))?;
        Ok(())
    }
}
