//! Token transformer encoder.
//!
//! A series is cut into tokens of `m` samples, each token is linearly
//! embedded, sinusoidal positions are added and a stack of pre-norm layers
//! follows. Masked-token mode swaps the embeddings of chosen tokens for a
//! learned mask embedding.

use ecgbench_autodiff::{ParamId, ParamStore, Tape, Var};
use serde::{Deserialize, Serialize};

use super::blocks::{pad_edge, round_up, sinusoid, DropoutRng, LayerNorm, Linear, Scope, TransformerLayer};
use super::Backbone;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformerConfig {
    pub hidden: usize,
    pub heads: usize,
    pub layers: usize,
    /// Samples per token, `m`.
    pub token_len: usize,
    /// Fraction of tokens masked during masked-token pretraining.
    pub mask_ratio: f64,
    pub ff_mult: usize,
    pub dropout: f64,
    /// Causal attention, required for next-token pretraining.
    pub causal: bool,
    /// Per-sample feature width when used as a task backbone.
    pub out_dim: usize,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            heads: 4,
            layers: 4,
            token_len: 10,
            mask_ratio: 0.3,
            ff_mult: 2,
            dropout: 0.0,
            causal: false,
            out_dim: 16,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return Err(Error::Config(format!(
                "transformer hidden {} not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if self.token_len == 0 || self.out_dim == 0 {
            return Err(Error::Config(
                "transformer token_len and out_dim must be positive".into(),
            ));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio <= 1.0) {
            return Err(Error::Config(format!("mask ratio {} outside (0, 1]", self.mask_ratio)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Number of tokens for a `len`-sample series.
    pub fn n_tokens(&self, len: usize) -> usize {
        round_up(len, self.token_len) / self.token_len
    }
}

#[derive(Debug, Clone)]
pub struct Transformer {
    pub config: TransformerConfig,
    pub embed: Linear,
    pub mask_token: ParamId,
    pub layers: Vec<TransformerLayer>,
    pub norm: LayerNorm,
    pub out: Linear,
}

/// Encoder output plus attention maps, one `[n×n]` per head per layer.
pub struct Encoded {
    pub tokens: Var,
    pub attention: Vec<Var>,
}

impl Transformer {
    pub fn new(config: TransformerConfig, scope: &mut Scope<'_>) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let embed = Linear::new(&mut scope.sub("embed"), config.token_len, h)?;
        let mask_token = scope.kaiming("mask_token", vec![h], h)?;
        let mut layers = Vec::with_capacity(config.layers);
        for i in 0..config.layers {
            layers.push(TransformerLayer::new(
                &mut scope.sub(&format!("layer{i}")),
                h,
                config.heads,
                config.ff_mult,
                config.causal,
            )?);
        }
        let norm = LayerNorm::new(&mut scope.sub("norm"), h)?;
        let out = Linear::new(&mut scope.sub("out"), h, config.token_len * config.out_dim)?;
        Ok(Self {
            config,
            embed,
            mask_token,
            layers,
            norm,
            out,
        })
    }

    /// Edge-pads `x` to whole tokens; returns `(n, row-major [n×m] values)`.
    pub fn tokenize(&self, x: &[f64]) -> (usize, Vec<f64>) {
        let m = self.config.token_len;
        let padded = round_up(x.len(), m);
        (padded / m, pad_edge(x, padded))
    }

    /// Encodes `[n×m]` tokens; rows listed in `masked` get the mask embedding.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        tokens: &[f64],
        masked: &[usize],
        rng: &mut DropoutRng<'_>,
    ) -> Result<Encoded> {
        let m = self.config.token_len;
        if tokens.len() % m != 0 || tokens.is_empty() {
            return Err(Error::Contract(format!(
                "{} values do not form tokens of {m}",
                tokens.len()
            )));
        }
        let n = tokens.len() / m;
        let h = self.config.hidden;
        let t = tape.constant(vec![n, m], tokens.to_vec())?;
        let mut e = self.embed.forward(tape, store, t)?;
        if !masked.is_empty() {
            let fill = tape.param(store, self.mask_token);
            e = tape.replace_rows(e, fill, masked)?;
        }
        let pos = tape.constant(vec![n, h], sinusoid(n, h))?;
        e = tape.add(e, pos)?;
        let mut attention = Vec::new();
        for layer in &self.layers {
            let (out, maps) = layer.forward(tape, store, e, self.config.dropout, rng)?;
            e = out;
            attention.extend(maps);
        }
        let tokens = self.norm.forward(tape, store, e)?;
        Ok(Encoded { tokens, attention })
    }
}

impl Backbone for Transformer {
    fn kind(&self) -> &'static str {
        "transformer"
    }

    fn out_dim(&self) -> usize {
        self.config.out_dim
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: &[f64], rng: &mut DropoutRng<'_>) -> Result<Var> {
        let (n, tokens) = self.tokenize(x);
        let enc = self.encode(tape, store, &tokens, &[], rng)?;
        let y = self.out.forward(tape, store, enc.tokens)?;
        let m = self.config.token_len;
        let y = tape.reshape(y, vec![n * m, self.config.out_dim])?;
        if n * m == x.len() {
            Ok(y)
        } else {
            Ok(tape.slice_rows(y, 0, x.len())?)
        }
    }

    fn as_transformer(&self) -> Option<&Transformer> {
        Some(self)
    }
}
