//! Parameterised building blocks shared by the backbones.

use ecgbench_autodiff::{init, ParamId, ParamStore, Tape, Unary, Var};
use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Registers parameters under a name prefix.
pub struct Scope<'a> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a> Scope<'a> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut ChaCha8Rng, prefix: impl Into<String>) -> Self {
        Self {
            store,
            rng,
            prefix: prefix.into(),
        }
    }

    pub fn sub(&mut self, name: &str) -> Scope<'_> {
        Scope {
            store: self.store,
            rng: self.rng,
            prefix: format!("{}{name}.", self.prefix),
        }
    }

    fn insert(&mut self, name: &str, t: ecgbench_autodiff::Tensor) -> Result<ParamId> {
        Ok(self.store.insert(format!("{}{name}", self.prefix), t)?)
    }

    pub fn kaiming(&mut self, name: &str, shape: Vec<usize>, fan_in: usize) -> Result<ParamId> {
        let t = init::kaiming_uniform(shape, fan_in, self.rng);
        self.insert(name, t)
    }

    pub fn zeros(&mut self, name: &str, shape: Vec<usize>) -> Result<ParamId> {
        self.insert(name, init::zeros(shape))
    }

    pub fn filled(&mut self, name: &str, shape: Vec<usize>, v: f64) -> Result<ParamId> {
        self.insert(name, init::filled(shape, v))
    }
}

/// Dense layer `x·W + b` over rows.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(scope: &mut Scope<'_>, d_in: usize, d_out: usize) -> Result<Self> {
        Ok(Self {
            w: scope.kaiming("w", vec![d_in, d_out], d_in)?,
            b: scope.zeros("b", vec![d_out])?,
            d_in,
            d_out,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let y = tape.matmul(x, w)?;
        Ok(tape.add_row(y, b)?)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

pub const LN_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(scope: &mut Scope<'_>, h: usize) -> Result<Self> {
        Ok(Self {
            gamma: scope.filled("gamma", vec![h], 1.0)?,
            beta: scope.zeros("beta", vec![h])?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        Ok(tape.layer_norm(x, g, b, LN_EPS)?)
    }
}

/// Dropout source for training passes; `None` means inference.
pub type DropoutRng<'a> = Option<&'a mut dyn RngCore>;

pub fn dropout(tape: &mut Tape, x: Var, rate: f64, rng: &mut DropoutRng<'_>) -> Result<Var> {
    match rng {
        Some(r) if rate > 0.0 => Ok(tape.dropout(x, rate, &mut **r)?),
        _ => Ok(x),
    }
}

/// Time-preserving convolution block on `[L × h_in]` features:
/// `act(LN(conv(x))) + x·P`, where `P` is a 1×1 channel projection.
#[derive(Debug, Clone, Copy)]
pub struct ConvBlock {
    pub conv: ParamId,
    pub norm: LayerNorm,
    pub proj: ParamId,
    pub kernel: usize,
    pub act: Unary,
    pub h_in: usize,
    pub h_out: usize,
}

impl ConvBlock {
    pub fn new(scope: &mut Scope<'_>, h_in: usize, h_out: usize, kernel: usize, act: Unary) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(Error::Config(format!("conv kernel {kernel} must be odd")));
        }
        let conv = scope.kaiming("conv", vec![h_out, h_in, kernel], h_in * kernel)?;
        let norm = LayerNorm::new(&mut scope.sub("ln"), h_out)?;
        let proj = scope.kaiming("proj", vec![h_in, h_out], h_in)?;
        Ok(Self {
            conv,
            norm,
            proj,
            kernel,
            act,
            h_in,
            h_out,
        })
    }

    /// Doubling block; fails on geometry the schedule forbids.
    pub fn doubling(scope: &mut Scope<'_>, h_in: usize, kernel: usize, act: Unary) -> Result<Self> {
        Self::new(scope, h_in, 2 * h_in, kernel, act)
    }

    /// Halving block; `h_in` must be even.
    pub fn halving(scope: &mut Scope<'_>, h_in: usize, kernel: usize, act: Unary) -> Result<Self> {
        if h_in % 2 != 0 {
            return Err(Error::Config(format!("cannot halve odd hidden dim {h_in}")));
        }
        Self::new(scope, h_in, h_in / 2, kernel, act)
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        dropout_rate: f64,
        rng: &mut DropoutRng<'_>,
    ) -> Result<Var> {
        let w = tape.param(store, self.conv);
        let xt = tape.transpose(x)?;
        let y = tape.conv1d(xt, w, (self.kernel - 1) / 2)?;
        let y = tape.transpose(y)?;
        let y = self.norm.forward(tape, store, y)?;
        let y = tape.unary(y, self.act)?;
        let y = dropout(tape, y, dropout_rate, rng)?;
        let p = tape.param(store, self.proj);
        let shortcut = tape.matmul(x, p)?;
        Ok(tape.add(y, shortcut)?)
    }
}

/// Sinusoidal position table `[n × h]`.
pub fn sinusoid(n: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * h];
    for pos in 0..n {
        for i in 0..h {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / h as f64);
            out[pos * h + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}

/// Pre-norm transformer encoder layer:
/// `x + MHA(LN(x))`, then `h + FF(LN(h))` with a GELU feed-forward.
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    pub ln1: LayerNorm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub heads: usize,
    pub causal: bool,
}

impl TransformerLayer {
    pub fn new(scope: &mut Scope<'_>, h: usize, heads: usize, ff_mult: usize, causal: bool) -> Result<Self> {
        if heads == 0 || h % heads != 0 {
            return Err(Error::Config(format!("hidden dim {h} not divisible by {heads} heads")));
        }
        Ok(Self {
            ln1: LayerNorm::new(&mut scope.sub("ln1"), h)?,
            q: Linear::new(&mut scope.sub("q"), h, h)?,
            k: Linear::new(&mut scope.sub("k"), h, h)?,
            v: Linear::new(&mut scope.sub("v"), h, h)?,
            o: Linear::new(&mut scope.sub("o"), h, h)?,
            ln2: LayerNorm::new(&mut scope.sub("ln2"), h)?,
            ff1: Linear::new(&mut scope.sub("ff1"), h, ff_mult.max(1) * h)?,
            ff2: Linear::new(&mut scope.sub("ff2"), ff_mult.max(1) * h, h)?,
            heads,
            causal,
        })
    }

    /// Returns the layer output and the per-head attention matrices.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        dropout_rate: f64,
        rng: &mut DropoutRng<'_>,
    ) -> Result<(Var, Vec<Var>)> {
        let h = self.q.d_in;
        let dh = h / self.heads;
        let n = self.ln1.forward(tape, store, x)?;
        let q = self.q.forward(tape, store, n)?;
        let k = self.k.forward(tape, store, n)?;
        let v = self.v.forward(tape, store, n)?;
        let mut outs = Vec::with_capacity(self.heads);
        let mut maps = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let (a, b) = (head * dh, (head + 1) * dh);
            let qh = tape.slice_cols(q, a, b)?;
            let kh = tape.slice_cols(k, a, b)?;
            let vh = tape.slice_cols(v, a, b)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt())?;
            let attn = tape.softmax_rows(scores, self.causal)?;
            maps.push(attn);
            outs.push(tape.matmul(attn, vh)?);
        }
        let cat = if outs.len() == 1 {
            outs[0]
        } else {
            tape.concat_cols(&outs)?
        };
        let att = self.o.forward(tape, store, cat)?;
        let att = dropout(tape, att, dropout_rate, rng)?;
        let x = tape.add(x, att)?;
        let n2 = self.ln2.forward(tape, store, x)?;
        let f = self.ff1.forward(tape, store, n2)?;
        let f = tape.gelu(f)?;
        let f = self.ff2.forward(tape, store, f)?;
        let f = dropout(tape, f, dropout_rate, rng)?;
        Ok((tape.add(x, f)?, maps))
    }
}

/// Largest of {4, 2, 1} dividing `h`.
pub fn default_heads(h: usize) -> usize {
    [4, 2, 1].into_iter().find(|k| h % k == 0).unwrap_or(1)
}

/// Edge-replication padding of a series to `len`.
pub fn pad_edge(x: &[f64], len: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    let last = *x.last().unwrap_or(&0.0);
    out.resize(len.max(x.len()), last);
    out
}

/// Smallest multiple of `m` not below `n`.
pub fn round_up(n: usize, m: usize) -> usize {
    n.div_ceil(m) * m
}
