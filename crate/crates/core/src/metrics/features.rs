//! Feature extraction with a pretrained transformer encoder and the
//! temporal-shift probe.

use std::path::Path;

use ecgbench_autodiff::{checkpoint, ParamStore, ReduceKind, Tape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::frechet::ffd;
use super::stats::fit_gaussian;
use crate::model::blocks::Scope;
use crate::model::{ModelConfig, Transformer, TransformerConfig, BACKBONE_PREFIX};
use crate::{Error, Result};

/// Fixed encoder mapping a series to the mean of its token embeddings.
pub struct Extractor {
    pub transformer: Transformer,
    pub store: ParamStore,
}

impl Extractor {
    /// Builds the encoder for `config` and copies its weights from `weights`.
    /// Every encoder parameter must be present.
    pub fn new(config: TransformerConfig, weights: &ParamStore) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let transformer = Transformer::new(config, &mut Scope::new(&mut store, &mut rng, BACKBONE_PREFIX))?;
        let copied = store.load_matching(weights)?;
        if copied != store.len() {
            return Err(ecgbench_autodiff::Error::Checkpoint(format!(
                "checkpoint provides {copied} of the {} extractor parameters",
                store.len()
            ))
            .into());
        }
        Ok(Self { transformer, store })
    }

    /// Loads a checkpoint whose manifest metadata holds the model config
    /// under `model`.
    pub fn from_checkpoint(base: &Path) -> Result<Self> {
        let (weights, manifest) = checkpoint::load(base)?;
        let model: ModelConfig = manifest
            .meta
            .get("model")
            .cloned()
            .ok_or_else(|| ecgbench_autodiff::Error::Checkpoint("manifest metadata lacks `model`".into()))
            .and_then(|v| serde_json::from_value(v).map_err(|e| ecgbench_autodiff::Error::Checkpoint(e.to_string())))?;
        if model.kind != "transformer" {
            return Err(Error::Config(format!(
                "feature extractor must be a transformer checkpoint, got `{}`",
                model.kind
            )));
        }
        Self::new(model.transformer, &weights)
    }

    pub fn dim(&self) -> usize {
        self.transformer.config.hidden
    }

    /// Feature vector of one series (model units).
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let (_, tokens) = self.transformer.tokenize(x);
        let enc = self
            .transformer
            .encode(&mut tape, &self.store, &tokens, &[], &mut None)?;
        let pooled = tape.reduce(enc.tokens, ReduceKind::Mean, 0)?;
        Ok(tape.value(pooled).to_vec())
    }
}

/// Features for every series, in input order.
pub fn extract_features(series: &[Vec<f64>], extractor: &Extractor) -> Result<Vec<Vec<f64>>> {
    series.par_iter().map(|x| extractor.features(x)).collect()
}

/// FFD between the feature distributions of two series sets.
pub fn ffd_between(real: &[Vec<f64>], generated: &[Vec<f64>], extractor: &Extractor) -> Result<f64> {
    let a = fit_gaussian(&extract_features(real, extractor)?)?;
    let b = fit_gaussian(&extract_features(generated, extractor)?)?;
    ffd(&a, &b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub shift: usize,
    pub mse: f64,
    pub ffd: f64,
}

/// `x` rotated right by `s` samples.
pub fn circular_shift(x: &[f64], s: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    if !x.is_empty() {
        out.rotate_right(s % x.len());
    }
    out
}

/// For each shift in `0, step, …, max_shift`: the mean MSE between every
/// series and its circular shift, and the FFD between the original and
/// shifted feature sets.
pub fn shift_probe(series: &[Vec<f64>], extractor: &Extractor, max_shift: usize, step: usize) -> Result<Vec<ShiftRow>> {
    if step == 0 {
        return Err(Error::Contract("shift step must be positive".into()));
    }
    let base = fit_gaussian(&extract_features(series, extractor)?)?;
    let mut rows = Vec::new();
    for shift in (0..=max_shift).step_by(step) {
        let shifted: Vec<Vec<f64>> = series.iter().map(|x| circular_shift(x, shift)).collect();
        let mse = series
            .iter()
            .zip(&shifted)
            .map(|(a, b)| super::mse(a, b))
            .sum::<Result<f64>>()?
            / series.len() as f64;
        let moved = fit_gaussian(&extract_features(&shifted, extractor)?)?;
        rows.push(ShiftRow {
            shift,
            mse,
            ffd: ffd(&base, &moved)?,
        });
    }
    Ok(rows)
}
