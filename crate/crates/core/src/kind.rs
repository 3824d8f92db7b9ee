use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The four downstream tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Detection,
    Forecasting,
    Generation,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::Classification,
        TaskKind::Detection,
        TaskKind::Forecasting,
        TaskKind::Generation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Classification => "classification",
            TaskKind::Detection => "detection",
            TaskKind::Forecasting => "forecasting",
            TaskKind::Generation => "generation",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown task `{s}`"))
    }
}
