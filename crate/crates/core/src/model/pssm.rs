//! Hierarchical patch encoder-decoder.
//!
//! `embed (1→d)` → `l × (patch → ConvBlock doubling)` →
//! `l × (unpatch → ConvBlock halving)` → `linear (d→d_out)` → crop.
//! Inputs are edge-padded to a multiple of `2^l` and cropped on output.

use ecgbench_autodiff::{ParamId, ParamStore, Tape, Unary, Var};
use serde::{Deserialize, Serialize};

use super::blocks::{round_up, ConvBlock, DropoutRng, Linear, Scope};
use super::Backbone;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PssmConfig {
    /// Base hidden width `d`.
    pub hidden: usize,
    /// Number of patch levels `l`.
    pub depth: usize,
    pub kernel: usize,
    pub activation: String,
    pub dropout: f64,
    /// Width of the final linear projection; defaults to `hidden`.
    pub out_dim: Option<usize>,
}

impl Default for PssmConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            depth: 3,
            kernel: 3,
            activation: "gelu".into(),
            dropout: 0.0,
            out_dim: None,
        }
    }
}

impl PssmConfig {
    pub fn out_dim(&self) -> usize {
        self.out_dim.unwrap_or(self.hidden)
    }

    pub fn activation(&self) -> Result<Unary> {
        Unary::parse(&self.activation).ok_or_else(|| Error::Config(format!("unknown activation `{}`", self.activation)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.depth == 0 {
            return Err(Error::Config("pssm hidden and depth must be at least 1".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("pssm kernel {} must be odd", self.kernel)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.out_dim == Some(0) {
            return Err(Error::Config("pssm out_dim must be positive".into()));
        }
        self.activation().map(|_| ())
    }

    /// Internal length for an input of `len` samples.
    pub fn padded_len(&self, len: usize) -> usize {
        round_up(len, 1 << self.depth)
    }
}

#[derive(Debug, Clone)]
pub struct Pssm {
    pub config: PssmConfig,
    pub embed: Linear,
    pub encoder: Vec<ConvBlock>,
    pub unpatch: Vec<(ParamId, ParamId)>,
    pub decoder: Vec<ConvBlock>,
    pub out: Linear,
}

/// Shapes recorded during a forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShapeTrace {
    pub embedded: Vec<usize>,
    pub encoder: Vec<Vec<usize>>,
    pub decoder: Vec<Vec<usize>>,
    pub output: Vec<usize>,
}

impl Pssm {
    pub fn new(config: PssmConfig, scope: &mut Scope<'_>) -> Result<Self> {
        config.validate()?;
        let act = config.activation()?;
        let (d, l, k) = (config.hidden, config.depth, config.kernel);
        let embed = Linear::new(&mut scope.sub("embed"), 1, d)?;
        let mut encoder = Vec::with_capacity(l);
        for i in 0..l {
            encoder.push(ConvBlock::doubling(&mut scope.sub(&format!("enc{i}")), d << i, k, act)?);
        }
        let mut unpatch = Vec::with_capacity(l);
        let mut decoder = Vec::with_capacity(l);
        for i in 0..l {
            let mut s = scope.sub(&format!("dec{i}"));
            // c1 = c2 = 1: the untrained decoder copies like nearest-neighbour upsampling.
            unpatch.push((s.filled("c1", vec![1], 1.0)?, s.filled("c2", vec![1], 1.0)?));
            decoder.push(ConvBlock::halving(&mut s, d << (l - i), k, act)?);
        }
        let out = Linear::new(&mut scope.sub("out"), d, config.out_dim())?;
        Ok(Self {
            config,
            embed,
            encoder,
            unpatch,
            decoder,
            out,
        })
    }

    pub fn forward_traced(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: &[f64],
        rng: &mut DropoutRng<'_>,
        trace: &mut ShapeTrace,
    ) -> Result<Var> {
        let len = x.len();
        let padded = self.config.padded_len(len);
        let xs = super::blocks::pad_edge(x, padded);
        let input = tape.constant(vec![padded, 1], xs)?;
        let mut e = self.embed.forward(tape, store, input)?;
        trace.embedded = tape.shape(e).to_vec();
        let rate = self.config.dropout;
        for block in &self.encoder {
            let p = tape.patch(e)?;
            e = block.forward(tape, store, p, rate, rng)?;
            trace.encoder.push(tape.shape(e).to_vec());
        }
        for (block, &(c1, c2)) in self.decoder.iter().zip(&self.unpatch) {
            let c1 = tape.param(store, c1);
            let c2 = tape.param(store, c2);
            let u = tape.unpatch(e, c1, c2)?;
            e = block.forward(tape, store, u, rate, rng)?;
            trace.decoder.push(tape.shape(e).to_vec());
        }
        let y = self.out.forward(tape, store, e)?;
        let y = if padded == len { y } else { tape.slice_rows(y, 0, len)? };
        trace.output = tape.shape(y).to_vec();
        Ok(y)
    }

    /// Inclusive output interval that can change when input sample `p` of a
    /// `len`-sample series changes.
    pub fn receptive_interval(&self, len: usize, p: usize) -> (usize, usize) {
        let padded = self.config.padded_len(len);
        let r = (self.config.kernel - 1) / 2;
        let mut n = padded;
        // Edge padding replicates the last sample.
        let (mut a, mut b) = (p, if p + 1 == len { padded - 1 } else { p });
        let conv = |a: usize, b: usize, n: usize| (a.saturating_sub(r), (b + r).min(n - 1));
        for _ in 0..self.config.depth {
            (a, b, n) = (a / 2, b / 2, n / 2);
            (a, b) = conv(a, b, n);
        }
        for _ in 0..self.config.depth {
            (a, b, n) = (2 * a, 2 * b + 1, n * 2);
            (a, b) = conv(a, b, n);
        }
        (a.min(len - 1), b.min(len - 1))
    }
}

impl Backbone for Pssm {
    fn kind(&self) -> &'static str {
        "pssm"
    }

    fn out_dim(&self) -> usize {
        self.config.out_dim()
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: &[f64], rng: &mut DropoutRng<'_>) -> Result<Var> {
        self.forward_traced(tape, store, x, rng, &mut ShapeTrace::default())
    }
}
