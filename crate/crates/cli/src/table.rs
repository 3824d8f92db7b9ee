//! Benchmark tables: datasets as rows, models as columns, and an unweighted
//! Average row.

use std::io::Write;

use ecgbench_core::metrics::EvalReport;
use ecgbench_core::TaskKind;

use crate::error::{CliError, Result};

pub const MISSING: &str = "—";

/// Whether smaller values of `metric` are better.
pub fn lower_is_better(metric: &str) -> bool {
    matches!(metric, "mse" | "ffd")
}

/// One metric of one task across datasets and models.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub task: TaskKind,
    pub metric: String,
    pub datasets: Vec<String>,
    pub models: Vec<String>,
    /// `cells[dataset][model]`.
    pub cells: Vec<Vec<Option<f64>>>,
}

impl Table {
    /// Column means over the datasets that have a value; `None` when a
    /// column is empty.
    pub fn average(&self) -> Vec<Option<f64>> {
        (0..self.models.len())
            .map(|m| {
                let vals: Vec<f64> = self.cells.iter().filter_map(|row| row[m]).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect()
    }

    /// Indices of the best values in `row` (all ties).
    fn best(&self, row: &[Option<f64>]) -> Vec<usize> {
        let lower = lower_is_better(&self.metric);
        let best =
            row.iter()
                .flatten()
                .copied()
                .reduce(|a, b| if (lower && b < a) || (!lower && b > a) { b } else { a });
        match best {
            Some(b) => (0..row.len()).filter(|&i| row[i] == Some(b)).collect(),
            None => Vec::new(),
        }
    }

    fn rows(&self) -> impl Iterator<Item = (&str, Vec<Option<f64>>)> {
        self.datasets
            .iter()
            .map(String::as_str)
            .zip(self.cells.iter().cloned())
            .chain(std::iter::once(("Average", self.average())))
    }

    /// Markdown with three decimals; the best value of each row is bold.
    pub fn to_markdown(&self) -> String {
        let mut s = format!("### {} ({})\n\n| Dataset |", self.task, self.metric);
        for m in &self.models {
            s += &format!(" {m} |");
        }
        s += "\n|---|";
        s += &"---|".repeat(self.models.len());
        s += "\n";
        for (name, row) in self.rows() {
            let best = self.best(&row);
            s += &format!("| {name} |");
            for (i, v) in row.iter().enumerate() {
                let cell = match v {
                    None => MISSING.to_string(),
                    Some(v) if best.contains(&i) => format!("**{v:.3}**"),
                    Some(v) => format!("{v:.3}"),
                };
                s += &format!(" {cell} |");
            }
            s += "\n";
        }
        s
    }

    /// CSV rows `task,metric,dataset,<models…>` at full precision; missing
    /// cells are `—`. With `header`, the column names come first.
    pub fn write_csv<W: Write>(&self, out: &mut csv::Writer<W>, header: bool) -> Result<()> {
        let err = |e: csv::Error| CliError::Data(format!("csv: {e}"));
        if header {
            let mut h = vec!["task".to_string(), "metric".into(), "dataset".into()];
            h.extend(self.models.iter().cloned());
            out.write_record(&h).map_err(err)?;
        }
        for (name, row) in self.rows() {
            let mut rec = vec![self.task.to_string(), self.metric.clone(), name.to_string()];
            rec.extend(
                row.iter()
                    .map(|v| v.map_or_else(|| MISSING.to_string(), |v| v.to_string())),
            );
            out.write_record(&rec).map_err(err)?;
        }
        Ok(())
    }
}

/// One table per metric, in first-seen order. Datasets and models keep the
/// order in which they first appear. All reports must share a task.
pub fn build_tables(reports: &[EvalReport]) -> Result<Vec<Table>> {
    let first = reports
        .first()
        .ok_or_else(|| CliError::Config("report needs at least one evaluation report".into()))?;
    if let Some(other) = reports.iter().find(|r| r.task != first.task) {
        return Err(CliError::Config(format!(
            "cannot aggregate {} and {} reports in one table",
            first.task, other.task
        )));
    }
    let mut metrics: Vec<String> = Vec::new();
    let mut datasets: Vec<String> = Vec::new();
    let mut models: Vec<String> = Vec::new();
    for r in reports {
        push_new(&mut datasets, &r.dataset);
        push_new(&mut models, &r.model);
        for m in &r.metrics {
            push_new(&mut metrics, &m.name);
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for r in reports {
        if !seen.insert((&r.dataset, &r.model)) {
            return Err(CliError::Config(format!(
                "two reports for dataset `{}` and model `{}`",
                r.dataset, r.model
            )));
        }
    }
    Ok(metrics
        .into_iter()
        .map(|metric| {
            let mut cells = vec![vec![None; models.len()]; datasets.len()];
            for r in reports {
                let d = datasets.iter().position(|x| *x == r.dataset).expect("collected");
                let m = models.iter().position(|x| *x == r.model).expect("collected");
                cells[d][m] = r.metric(&metric);
            }
            Table {
                task: first.task,
                metric,
                datasets: datasets.clone(),
                models: models.clone(),
                cells,
            }
        })
        .collect())
}

fn push_new(v: &mut Vec<String>, s: &str) {
    if !v.iter().any(|x| x == s) {
        v.push(s.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ecgbench_core::metrics::Metric;

    fn report(task: TaskKind, dataset: &str, model: &str, metric: &str, v: f64) -> EvalReport {
        EvalReport {
            task,
            dataset: dataset.into(),
            model: model.into(),
            metrics: vec![Metric {
                name: metric.into(),
                value: v,
            }],
            fingerprint: String::new(),
            seed: 0,
            config: String::new(),
        }
    }

    #[test]
    fn two_by_two_with_average() {
        let rs = [
            report(TaskKind::Detection, "a", "m1", "f1", 0.5),
            report(TaskKind::Detection, "a", "m2", "f1", 0.7),
            report(TaskKind::Detection, "b", "m1", "f1", 0.9),
            report(TaskKind::Detection, "b", "m2", "f1", 0.6),
        ];
        let t = &build_tables(&rs).unwrap()[0];
        assert_eq!(t.datasets, ["a", "b"]);
        assert_eq!(t.models, ["m1", "m2"]);
        let avg = t.average();
        assert!((avg[0].unwrap() - 0.7).abs() < 1e-12);
        assert!((avg[1].unwrap() - 0.65).abs() < 1e-12);
        let md = t.to_markdown();
        assert!(md.contains("| a | 0.500 | **0.700** |"));
        assert!(md.contains("| Average | **0.700** | 0.650 |"));
    }

    #[test]
    fn missing_cells_skip_the_mean() {
        let rs = [
            report(TaskKind::Forecasting, "a", "m1", "mse", 0.2),
            report(TaskKind::Forecasting, "b", "m1", "mse", 0.4),
            report(TaskKind::Forecasting, "a", "m2", "mse", 0.1),
        ];
        let t = &build_tables(&rs).unwrap()[0];
        assert_eq!(t.cells[1][1], None);
        assert_eq!(t.average()[1], Some(0.1));
        let md = t.to_markdown();
        assert!(md.contains("| b | **0.400** | — |"), "{md}");
        // Lower is better for mse.
        assert!(md.contains("| Average | 0.300 | **0.100** |"), "{md}");
    }

    #[test]
    fn mixed_tasks_and_duplicates_rejected() {
        let mixed = [
            report(TaskKind::Detection, "a", "m", "f1", 0.5),
            report(TaskKind::Classification, "a", "m", "accuracy", 0.5),
        ];
        assert!(matches!(build_tables(&mixed), Err(CliError::Config(_))));
        let dup = [
            report(TaskKind::Detection, "a", "m", "f1", 0.5),
            report(TaskKind::Detection, "a", "m", "f1", 0.6),
        ];
        assert!(matches!(build_tables(&dup), Err(CliError::Config(_))));
        assert!(build_tables(&[]).is_err());
    }
}
