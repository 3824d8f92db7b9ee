//! Task heads and losses, self-supervised objectives, and the training loop.

pub mod heads;
pub mod loss;
pub mod objective;
pub mod train;

use std::fmt;
use std::str::FromStr;

use ecgbench_autodiff::ParamStore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use heads::{HeadConfig, HeadRegistry, Target, TaskHead};
pub use objective::{MaskedToken, NextToken, Objective, SampleCtx, TaskModel};
pub use train::{evaluate_loss, train, train_resume, EpochLoss, LogEntry, TrainOutcome, TrainSpec};

use crate::model::{BackboneRegistry, ModelConfig};
use crate::signal::window::Window;
use crate::{Error, Result};

/// Self-supervised pretraining objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PretrainKind {
    Ntp,
    Mtp,
}

impl fmt::Display for PretrainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PretrainKind::Ntp => "ntp",
            PretrainKind::Mtp => "mtp",
        })
    }
}

impl FromStr for PretrainKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ntp" => Ok(PretrainKind::Ntp),
            "mtp" => Ok(PretrainKind::Mtp),
            other => Err(format!("unknown pretraining objective `{other}`")),
        }
    }
}

/// Builds the backbone named in `model` and wraps it in the objective.
pub fn build_pretrain(
    model: &ModelConfig,
    kind: PretrainKind,
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
) -> Result<Box<dyn Objective>> {
    let backbone = BackboneRegistry::default().build(model, store, rng)?;
    Ok(match kind {
        PretrainKind::Ntp => Box::new(NextToken::new(backbone, store, rng)?),
        PretrainKind::Mtp => Box::new(MaskedToken::new(
            backbone,
            model.transformer.token_len,
            model.transformer.mask_ratio,
            store,
            rng,
        )?),
    })
}

/// Self-supervised training over an unlabeled corpus.
pub fn pretrain(
    objective: &dyn Objective,
    init: &ParamStore,
    corpus: &[Window],
    spec: &TrainSpec,
    log: &mut dyn FnMut(&LogEntry),
) -> Result<TrainOutcome> {
    if corpus.is_empty() {
        return Err(Error::Degenerate("empty pretraining corpus".into()));
    }
    train(objective, init, corpus, spec, log)
}
