//! Ablated variants of the patch model.
//!
//! `rp_trans` keeps the patch/unpatch schedule but swaps every ConvBlock for
//! a channel projection followed by one transformer layer over time.
//! `wo_ssp` drops the hierarchy: one fixed tokenisation (4 samples per
//! token), a flat stack of `2l` constant-width ConvBlocks, and a single
//! projection back to per-sample features.

use ecgbench_autodiff::{ParamId, ParamStore, Tape, Var};

use super::blocks::{
    default_heads, pad_edge, round_up, sinusoid, ConvBlock, DropoutRng, Linear, Scope, TransformerLayer,
};
use super::pssm::PssmConfig;
use super::Backbone;
use crate::Result;

const FF_MULT: usize = 2;

#[derive(Debug, Clone)]
struct TransBlock {
    proj: Linear,
    layer: TransformerLayer,
}

impl TransBlock {
    fn new(scope: &mut Scope<'_>, h_in: usize, h_out: usize) -> Result<Self> {
        Ok(Self {
            proj: Linear::new(&mut scope.sub("proj"), h_in, h_out)?,
            layer: TransformerLayer::new(&mut scope.sub("attn"), h_out, default_heads(h_out), FF_MULT, false)?,
        })
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, rate: f64, rng: &mut DropoutRng<'_>) -> Result<Var> {
        let y = self.proj.forward(tape, store, x)?;
        Ok(self.layer.forward(tape, store, y, rate, rng)?.0)
    }
}

#[derive(Debug, Clone)]
pub struct RpTrans {
    pub config: PssmConfig,
    embed: Linear,
    encoder: Vec<TransBlock>,
    unpatch: Vec<(ParamId, ParamId)>,
    decoder: Vec<TransBlock>,
    out: Linear,
}

impl RpTrans {
    pub fn new(config: PssmConfig, scope: &mut Scope<'_>) -> Result<Self> {
        config.validate()?;
        let (d, l) = (config.hidden, config.depth);
        let embed = Linear::new(&mut scope.sub("embed"), 1, d)?;
        let mut encoder = Vec::with_capacity(l);
        for i in 0..l {
            encoder.push(TransBlock::new(
                &mut scope.sub(&format!("enc{i}")),
                d << i,
                d << (i + 1),
            )?);
        }
        let mut unpatch = Vec::with_capacity(l);
        let mut decoder = Vec::with_capacity(l);
        for i in 0..l {
            let mut s = scope.sub(&format!("dec{i}"));
            unpatch.push((s.filled("c1", vec![1], 1.0)?, s.filled("c2", vec![1], 1.0)?));
            let h = d << (l - i);
            decoder.push(TransBlock::new(&mut s, h, h / 2)?);
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
}

impl Backbone for RpTrans {
    fn kind(&self) -> &'static str {
        "rp_trans"
    }

    fn out_dim(&self) -> usize {
        self.config.out_dim()
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: &[f64], rng: &mut DropoutRng<'_>) -> Result<Var> {
        let len = x.len();
        let padded = self.config.padded_len(len);
        let d = self.config.hidden;
        let input = tape.constant(vec![padded, 1], pad_edge(x, padded))?;
        let e = self.embed.forward(tape, store, input)?;
        let pos = tape.constant(vec![padded, d], sinusoid(padded, d))?;
        let mut e = tape.add(e, pos)?;
        let rate = self.config.dropout;
        for block in &self.encoder {
            let p = tape.patch(e)?;
            e = block.forward(tape, store, p, rate, rng)?;
        }
        for (block, &(c1, c2)) in self.decoder.iter().zip(&self.unpatch) {
            let c1 = tape.param(store, c1);
            let c2 = tape.param(store, c2);
            let u = tape.unpatch(e, c1, c2)?;
            e = block.forward(tape, store, u, rate, rng)?;
        }
        let y = self.out.forward(tape, store, e)?;
        if padded == len {
            Ok(y)
        } else {
            Ok(tape.slice_rows(y, 0, len)?)
        }
    }
}

/// Token length of the single input patching in [`WoSsp`].
pub const WO_SSP_TOKEN: usize = 4;

#[derive(Debug, Clone)]
pub struct WoSsp {
    pub config: PssmConfig,
    embed: Linear,
    blocks: Vec<ConvBlock>,
    out: Linear,
}

impl WoSsp {
    pub fn new(config: PssmConfig, scope: &mut Scope<'_>) -> Result<Self> {
        config.validate()?;
        let act = config.activation()?;
        let d = config.hidden;
        let embed = Linear::new(&mut scope.sub("embed"), WO_SSP_TOKEN, d)?;
        let mut blocks = Vec::with_capacity(2 * config.depth);
        for i in 0..2 * config.depth {
            blocks.push(ConvBlock::new(
                &mut scope.sub(&format!("block{i}")),
                d,
                d,
                config.kernel,
                act,
            )?);
        }
        let out = Linear::new(&mut scope.sub("out"), d, WO_SSP_TOKEN * config.out_dim())?;
        Ok(Self {
            config,
            embed,
            blocks,
            out,
        })
    }
}

impl Backbone for WoSsp {
    fn kind(&self) -> &'static str {
        "wo_ssp"
    }

    fn out_dim(&self) -> usize {
        self.config.out_dim()
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: &[f64], rng: &mut DropoutRng<'_>) -> Result<Var> {
        let len = x.len();
        let padded = round_up(len, WO_SSP_TOKEN);
        let n = padded / WO_SSP_TOKEN;
        let t = tape.constant(vec![n, WO_SSP_TOKEN], pad_edge(x, padded))?;
        let mut e = self.embed.forward(tape, store, t)?;
        for block in &self.blocks {
            e = block.forward(tape, store, e, self.config.dropout, rng)?;
        }
        let y = self.out.forward(tape, store, e)?;
        let y = tape.reshape(y, vec![padded, self.config.out_dim()])?;
        if padded == len {
            Ok(y)
        } else {
            Ok(tape.slice_rows(y, 0, len)?)
        }
    }
}
