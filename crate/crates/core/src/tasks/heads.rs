//! Task projection heads over `[L × d]` backbone features.

use std::collections::BTreeMap;

use ecgbench_autodiff::{ParamStore, ReduceKind, Tape, Var};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss;
use crate::model::blocks::{Linear, Scope};
use crate::signal::window::{Window, HORIZON, WINDOW_LEN};
use crate::{Error, Result, TaskKind};

pub const HEAD_PREFIX: &str = "head.";

/// Shape parameters a head needs beyond the feature width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    pub classes: usize,
    /// Input series length.
    pub length: usize,
    pub horizon: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            classes: 2,
            length: WINDOW_LEN,
            horizon: HORIZON,
        }
    }
}

/// Supervision for one window, in model units.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Class(usize),
    Marks(Vec<f64>),
    Series(Vec<f64>),
}

impl Target {
    /// Extracts the normalized target for `task`.
    pub fn from_window(w: &Window, task: TaskKind) -> Result<Self> {
        let missing = || {
            Error::TaskConfig(format!(
                "window from `{}` lacks a {task} payload",
                w.provenance.record_id
            ))
        };
        Ok(match task {
            TaskKind::Classification => Target::Class(w.class().ok_or_else(missing)? as usize),
            TaskKind::Detection => Target::Marks(w.marks_f64().ok_or_else(missing)?),
            TaskKind::Forecasting => Target::Series(w.future_normalized().ok_or_else(missing)?),
            TaskKind::Generation => Target::Series(w.target_normalized().ok_or_else(missing)?),
        })
    }
}

pub trait TaskHead: Send + Sync {
    fn kind(&self) -> TaskKind;

    /// Raw output: class logits `[c]`, per-step logits `[L]`, forecast `[H]`
    /// or reconstruction `[L]`.
    fn forward(&self, tape: &mut Tape, store: &ParamStore, feats: Var) -> Result<Var>;

    fn loss(&self, tape: &mut Tape, store: &ParamStore, feats: Var, target: &Target, pos_weight: f64) -> Result<Var> {
        let out = self.forward(tape, store, feats)?;
        match (self.kind(), target) {
            (TaskKind::Classification, Target::Class(c)) => loss::loss_cls(tape, out, *c),
            (TaskKind::Detection, Target::Marks(m)) => loss::loss_det(tape, out, m, pos_weight),
            (TaskKind::Forecasting, Target::Series(s)) => loss::loss_forecast(tape, out, s),
            (TaskKind::Generation, Target::Series(s)) => loss::loss_gen(tape, out, s),
            (k, t) => Err(Error::TaskConfig(format!("{k} head cannot score target {t:?}"))),
        }
    }
}

/// Mean-pooled features → linear `d → c`.
pub struct ClassificationHead {
    pub linear: Linear,
}

/// Per-step linear `d → 1`, reshaped to `[L]`. Serves detection and generation.
pub struct StepHead {
    pub kind: TaskKind,
    pub linear: Linear,
}

/// Flattened features → linear `(L·d) → H`.
pub struct ForecastHead {
    pub linear: Linear,
    pub length: usize,
    pub d: usize,
}

impl TaskHead for ClassificationHead {
    fn kind(&self) -> TaskKind {
        TaskKind::Classification
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, feats: Var) -> Result<Var> {
        let pooled = tape.reduce(feats, ReduceKind::Mean, 0)?;
        let d = tape.value(pooled).len();
        let row = tape.reshape(pooled, vec![1, d])?;
        let logits = self.linear.forward(tape, store, row)?;
        Ok(tape.reshape(logits, vec![self.linear.d_out])?)
    }
}

impl TaskHead for StepHead {
    fn kind(&self) -> TaskKind {
        self.kind
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, feats: Var) -> Result<Var> {
        let y = self.linear.forward(tape, store, feats)?;
        let n = tape.value(y).len();
        Ok(tape.reshape(y, vec![n])?)
    }
}

impl TaskHead for ForecastHead {
    fn kind(&self) -> TaskKind {
        TaskKind::Forecasting
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, feats: Var) -> Result<Var> {
        let shape = tape.shape(feats).to_vec();
        if shape != [self.length, self.d] {
            return Err(Error::Contract(format!(
                "forecast head expects [{}×{}] features, got {shape:?}",
                self.length, self.d
            )));
        }
        let flat = tape.reshape(feats, vec![1, self.length * self.d])?;
        let y = self.linear.forward(tape, store, flat)?;
        Ok(tape.reshape(y, vec![self.linear.d_out])?)
    }
}

pub type HeadCtor = fn(TaskKind, usize, &HeadConfig, &mut Scope<'_>) -> Result<Box<dyn TaskHead>>;

/// Task → head constructor table.
#[derive(Clone)]
pub struct HeadRegistry {
    entries: BTreeMap<TaskKind, HeadCtor>,
}

impl Default for HeadRegistry {
    fn default() -> Self {
        let mut r = Self {
            entries: BTreeMap::new(),
        };
        r.register(TaskKind::Classification, |_, d, c, s| {
            if c.classes < 2 {
                return Err(Error::TaskConfig(format!(
                    "classification needs ≥ 2 classes, got {}",
                    c.classes
                )));
            }
            Ok(Box::new(ClassificationHead {
                linear: Linear::new(s, d, c.classes)?,
            }))
        });
        let step: HeadCtor = |k, d, _, s| {
            Ok(Box::new(StepHead {
                kind: k,
                linear: Linear::new(s, d, 1)?,
            }))
        };
        r.register(TaskKind::Detection, step);
        r.register(TaskKind::Generation, step);
        r.register(TaskKind::Forecasting, |_, d, c, s| {
            Ok(Box::new(ForecastHead {
                linear: Linear::new(s, c.length * d, c.horizon)?,
                length: c.length,
                d,
            }))
        });
        r
    }
}

impl HeadRegistry {
    pub fn register(&mut self, task: TaskKind, ctor: HeadCtor) {
        self.entries.insert(task, ctor);
    }

    /// Builds the head for `task` on `d`-wide features under `head.`.
    pub fn build(
        &self,
        task: TaskKind,
        d: usize,
        config: &HeadConfig,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Box<dyn TaskHead>> {
        let ctor = self
            .entries
            .get(&task)
            .ok_or_else(|| Error::Config(format!("no head registered for {task}")))?;
        ctor(
            task,
            d,
            config,
            &mut Scope::new(store, rng, format!("{HEAD_PREFIX}{task}.")),
        )
    }
}
