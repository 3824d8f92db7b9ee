//! Mini-batch Adam training with seeded shuffling and learning-rate
//! selection.
//!
//! Each batch builds one tape per window. Per-window gradients may be
//! computed in parallel but are always summed in batch order, so results do
//! not depend on the thread count.

use ecgbench_autodiff::{Adam, AdamConfig, ParamId, ParamStore, Tape};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::{Objective, SampleCtx};
use crate::model::BACKBONE_PREFIX;
use crate::signal::window::Window;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_candidates: Vec<f64>,
    pub seed: u64,
    /// Train only the head (and any pretraining projection).
    pub freeze_backbone: bool,
    /// Emit a log entry every this many epochs (the last epoch always logs).
    pub log_every: usize,
    /// Held-out share of the training windows used to pick a learning rate
    /// when several candidates are given.
    pub val_fraction: f64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            lr_candidates: vec![1e-3],
            seed: 0,
            freeze_backbone: false,
            log_every: 1,
            val_fraction: 0.1,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be at least 1".into()));
        }
        if self.lr_candidates.is_empty() || self.lr_candidates.iter().any(|lr| !(*lr > 0.0)) {
            return Err(Error::Config("need at least one positive learning rate".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "val fraction {} outside [0, 1)",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub lr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub val: Option<f64>,
}

pub struct TrainOutcome {
    pub store: ParamStore,
    pub optimizer: Adam,
    /// Mean loss over the training windows before the first update.
    pub initial_loss: f64,
    pub curve: Vec<EpochLoss>,
    pub lr: f64,
    /// Validation loss of the chosen candidate, when selection ran.
    pub val_loss: Option<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.curve.last().map_or(self.initial_loss, |e| e.train)
    }
}

/// Mixes a seed with two counters (splitmix64 finalizer).
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Debug builds reject NaN/Inf inside tape operations; training reports
/// those as a non-finite loss at the current epoch and batch.
fn is_non_finite(e: &Error) -> bool {
    matches!(e, Error::Autodiff(ecgbench_autodiff::Error::NonFinite { .. }))
}

type SampleGrads = (f64, Vec<(ParamId, Vec<f64>)>);

fn sample_grads(
    obj: &dyn Objective,
    store: &ParamStore,
    w: &Window,
    seed: u64,
    pos_weight: f64,
    scale: f64,
) -> Result<SampleGrads> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::new();
    let mut ctx = SampleCtx {
        rng: &mut rng,
        train: true,
        pos_weight,
    };
    let loss = match obj.sample_loss(&mut tape, store, w, &mut ctx) {
        Err(e) if is_non_finite(&e) => return Ok((f64::NAN, Vec::new())),
        other => other?,
    };
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    let scaled = tape.scale(loss, scale)?;
    let grads = tape.backward(scaled)?;
    Ok((value, tape.param_grads(&grads)))
}

/// Mean loss in inference mode. Mask selection for masked-token objectives
/// is seeded per window index, so repeated calls agree.
pub fn evaluate_loss(obj: &dyn Objective, store: &ParamStore, windows: &[Window], seed: u64) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::Degenerate("no windows to evaluate".into()));
    }
    let refs: Vec<&Window> = windows.iter().collect();
    let pos_weight = obj.batch_pos_weight(&refs);
    let losses: Vec<Result<f64>> = windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX, i as u64));
            let mut tape = Tape::new();
            let mut ctx = SampleCtx {
                rng: &mut rng,
                train: false,
                pos_weight,
            };
            match obj.sample_loss(&mut tape, store, w, &mut ctx) {
                Ok(l) => Ok(tape.scalar(l)),
                Err(e) if is_non_finite(&e) => Ok(f64::NAN),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / windows.len() as f64)
}

fn run(
    obj: &dyn Objective,
    init: &ParamStore,
    optimizer: Option<Adam>,
    train: &[Window],
    val: Option<&[Window]>,
    lr: f64,
    spec: &TrainSpec,
    log: &mut dyn FnMut(&LogEntry),
) -> Result<TrainOutcome> {
    let mut store = init.clone();
    if spec.freeze_backbone {
        store.set_trainable_prefix(BACKBONE_PREFIX, false);
    }
    let mut adam = match optimizer {
        Some(mut a) => {
            a.config.lr = lr;
            a
        }
        None => Adam::new(
            AdamConfig {
                lr,
                ..Default::default()
            },
            &store,
        ),
    };
    let initial_loss = evaluate_loss(obj, &store, train, spec.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::with_capacity(spec.epochs);
    for epoch in 0..spec.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(spec.batch_size).enumerate() {
            let batch: Vec<&Window> = chunk.iter().map(|&i| &train[i]).collect();
            let pos_weight = obj.batch_pos_weight(&batch);
            let scale = 1.0 / batch.len() as f64;
            let results: Vec<Result<SampleGrads>> = chunk
                .par_iter()
                .map(|&i| {
                    let seed = derive_seed(spec.seed, epoch as u64, i as u64);
                    sample_grads(obj, &store, &train[i], seed, pos_weight, scale)
                })
                .collect();
            store.zero_grad();
            let mut batch_loss = 0.0;
            for r in results {
                let (l, g) = r?;
                batch_loss += l;
                store.accumulate_detached(&g);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            total += batch_loss;
            adam.step(&mut store).map_err(|e| match e {
                ecgbench_autodiff::Error::NanGradient { .. } => Error::NonFiniteLoss { epoch, batch: b },
                other => other.into(),
            })?;
        }
        let train_loss = total / train.len() as f64;
        let val_loss = match val {
            Some(v) if !v.is_empty() => Some(evaluate_loss(obj, &store, v, spec.seed)?),
            _ => None,
        };
        if (epoch + 1) % spec.log_every.max(1) == 0 || epoch + 1 == spec.epochs {
            log(&LogEntry {
                epoch,
                split: "train".into(),
                loss: train_loss,
                lr,
                seed: spec.seed,
            });
            if let Some(v) = val_loss {
                log(&LogEntry {
                    epoch,
                    split: "val".into(),
                    loss: v,
                    lr,
                    seed: spec.seed,
                });
            }
        }
        curve.push(EpochLoss {
            epoch,
            train: train_loss,
            val: val_loss,
        });
    }
    store.set_trainable_prefix(BACKBONE_PREFIX, true);
    let val_loss = curve.last().and_then(|e| e.val);
    Ok(TrainOutcome {
        store,
        optimizer: adam,
        initial_loss,
        curve,
        lr,
        val_loss,
    })
}

/// Trains from `init`. With several learning-rate candidates, a seeded
/// `val_fraction` of the windows is held out, every candidate is trained on
/// the rest, and the candidate with the lowest final validation loss is
/// returned.
pub fn train(
    obj: &dyn Objective,
    init: &ParamStore,
    windows: &[Window],
    spec: &TrainSpec,
    log: &mut dyn FnMut(&LogEntry),
) -> Result<TrainOutcome> {
    train_resume(obj, init, None, windows, spec, log)
}

/// [`train`] continuing from an existing optimizer state. Resuming requires
/// a single learning-rate candidate.
pub fn train_resume(
    obj: &dyn Objective,
    init: &ParamStore,
    optimizer: Option<Adam>,
    windows: &[Window],
    spec: &TrainSpec,
    log: &mut dyn FnMut(&LogEntry),
) -> Result<TrainOutcome> {
    spec.validate()?;
    if windows.is_empty() {
        return Err(Error::Degenerate("empty training set".into()));
    }
    if spec.lr_candidates.len() == 1 {
        return run(obj, init, optimizer, windows, None, spec.lr_candidates[0], spec, log);
    }
    if optimizer.is_some() {
        return Err(Error::Config("resuming requires a single learning rate".into()));
    }
    let mut idx: Vec<usize> = (0..windows.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 1, 0)));
    if windows.len() < 2 {
        return Err(Error::Degenerate(
            "learning-rate selection needs at least 2 windows".into(),
        ));
    }
    let n_val = ((windows.len() as f64 * spec.val_fraction).round() as usize).clamp(1, windows.len() - 1);
    let mut val_idx = idx[..n_val].to_vec();
    let mut tr_idx = idx[n_val..].to_vec();
    val_idx.sort_unstable();
    tr_idx.sort_unstable();
    let val: Vec<Window> = val_idx.iter().map(|&i| windows[i].clone()).collect();
    let tr: Vec<Window> = tr_idx.iter().map(|&i| windows[i].clone()).collect();
    let mut best: Option<TrainOutcome> = None;
    for &lr in &spec.lr_candidates {
        let out = run(obj, init, None, &tr, Some(&val), lr, spec, log)?;
        let v = out.val_loss.unwrap_or(f64::INFINITY);
        if best.as_ref().map_or(true, |b| v < b.val_loss.unwrap_or(f64::INFINITY)) {
            best = Some(out);
        }
    }
    Ok(best.expect("at least one candidate"))
}
