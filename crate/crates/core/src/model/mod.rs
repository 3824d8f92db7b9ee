//! Backbones: the hierarchical patch model, its two ablations and a token
//! transformer, selected by name through [`BackboneRegistry`].

pub mod ablation;
pub mod blocks;
pub mod pssm;
pub mod transformer;

use std::collections::BTreeMap;

use ecgbench_autodiff::{ParamStore, Tape, Var};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use ablation::{RpTrans, WoSsp};
pub use blocks::{DropoutRng, Scope};
pub use pssm::{Pssm, PssmConfig, ShapeTrace};
pub use transformer::{Transformer, TransformerConfig};

use crate::{Error, Result};

/// Parameter-name prefix of every backbone parameter.
pub const BACKBONE_PREFIX: &str = "backbone.";

/// Maps a single-channel series of length `L` to per-sample features
/// `[L × out_dim]`.
pub trait Backbone: Send + Sync {
    fn kind(&self) -> &'static str;

    fn out_dim(&self) -> usize;

    /// `rng` enables dropout (training); `None` is inference.
    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: &[f64], rng: &mut DropoutRng<'_>) -> Result<Var>;

    fn as_transformer(&self) -> Option<&Transformer> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Registered backbone name.
    pub kind: String,
    pub pssm: PssmConfig,
    pub transformer: TransformerConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: "pssm".into(),
            pssm: PssmConfig::default(),
            transformer: TransformerConfig::default(),
        }
    }
}

pub type BackboneCtor = fn(&ModelConfig, &mut Scope<'_>) -> Result<Box<dyn Backbone>>;

/// Name → constructor table for backbones.
#[derive(Clone)]
pub struct BackboneRegistry {
    entries: BTreeMap<&'static str, BackboneCtor>,
}

impl Default for BackboneRegistry {
    fn default() -> Self {
        let mut r = Self {
            entries: BTreeMap::new(),
        };
        r.register("pssm", |c, s| Ok(Box::new(Pssm::new(c.pssm.clone(), s)?)));
        r.register("rp_trans", |c, s| Ok(Box::new(RpTrans::new(c.pssm.clone(), s)?)));
        r.register("wo_ssp", |c, s| Ok(Box::new(WoSsp::new(c.pssm.clone(), s)?)));
        r.register("transformer", |c, s| {
            Ok(Box::new(Transformer::new(c.transformer.clone(), s)?))
        });
        r
    }
}

impl BackboneRegistry {
    pub fn register(&mut self, name: &'static str, ctor: BackboneCtor) {
        self.entries.insert(name, ctor);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    /// Builds `config.kind`, registering its parameters under `backbone.`.
    pub fn build(
        &self,
        config: &ModelConfig,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Box<dyn Backbone>> {
        let ctor = self.entries.get(config.kind.as_str()).ok_or_else(|| {
            let known: Vec<_> = self.names().collect();
            Error::Config(format!(
                "unknown model kind `{}` (known: {})",
                config.kind,
                known.join(", ")
            ))
        })?;
        ctor(config, &mut Scope::new(store, rng, BACKBONE_PREFIX))
    }
}

/// Builds one of the ablation variants (`rp_trans`, `wo_ssp`).
pub fn build_ablation(
    kind: &str,
    config: &PssmConfig,
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
) -> Result<Box<dyn Backbone>> {
    if !matches!(kind, "rp_trans" | "wo_ssp") {
        return Err(Error::Config(format!("unknown ablation `{kind}`")));
    }
    let cfg = ModelConfig {
        kind: kind.into(),
        pssm: config.clone(),
        ..Default::default()
    };
    BackboneRegistry::default().build(&cfg, store, rng)
}

/// Parameter count under the backbone prefix.
pub fn backbone_params(store: &ParamStore) -> usize {
    store
        .iter()
        .filter(|(_, n, _)| n.starts_with(BACKBONE_PREFIX))
        .map(|(_, _, t)| t.len())
        .sum()
}
