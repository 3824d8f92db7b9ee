//! Per-window training objectives: supervised task heads and the two
//! self-supervised objectives (next-token and masked-token prediction).

use ecgbench_autodiff::{ParamStore, Tape, Var};
use rand::seq::index::sample;
use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use super::heads::{HeadConfig, HeadRegistry, Target, TaskHead};
use super::loss;
use crate::model::blocks::{Linear, Scope};
use crate::model::{Backbone, BackboneRegistry, ModelConfig};
use crate::signal::window::Window;
use crate::{Error, Result, TaskKind};

pub const PRETRAIN_PREFIX: &str = "pretrain.";

/// Per-sample context handed to [`Objective::sample_loss`].
pub struct SampleCtx<'a> {
    /// Seeded per sample; drives dropout (when `train`) and mask selection.
    pub rng: &'a mut ChaCha8Rng,
    pub train: bool,
    /// Positive-class weight for detection, computed per batch.
    pub pos_weight: f64,
}

pub trait Objective: Send + Sync {
    fn name(&self) -> String;

    fn sample_loss(&self, tape: &mut Tape, store: &ParamStore, w: &Window, ctx: &mut SampleCtx<'_>) -> Result<Var>;

    /// Batch-level detection weight; 1 for everything else.
    fn batch_pos_weight(&self, _batch: &[&Window]) -> f64 {
        1.0
    }
}

fn dropout_rng<'a>(ctx: &'a mut SampleCtx<'_>) -> Option<&'a mut dyn RngCore> {
    if ctx.train {
        Some(&mut *ctx.rng as &mut dyn RngCore)
    } else {
        None
    }
}

/// Backbone plus task head.
pub struct TaskModel {
    pub task: TaskKind,
    pub backbone: Box<dyn Backbone>,
    pub head: Box<dyn TaskHead>,
    /// Apply the detection positive-class weight.
    pub weight_positives: bool,
}

impl TaskModel {
    /// Builds backbone and head from the default registries.
    pub fn build(
        model: &ModelConfig,
        task: TaskKind,
        head: &HeadConfig,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let backbone = BackboneRegistry::default().build(model, store, rng)?;
        let head = HeadRegistry::default().build(task, backbone.out_dim(), head, store, rng)?;
        Ok(Self {
            task,
            backbone,
            head,
            weight_positives: true,
        })
    }

    /// Head output for a normalized input series (inference).
    pub fn predict(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let f = self.backbone.forward(&mut tape, store, x, &mut None)?;
        let y = self.head.forward(&mut tape, store, f)?;
        Ok(tape.value(y).to_vec())
    }
}

impl Objective for TaskModel {
    fn name(&self) -> String {
        format!("{}/{}", self.backbone.kind(), self.task)
    }

    fn sample_loss(&self, tape: &mut Tape, store: &ParamStore, w: &Window, ctx: &mut SampleCtx<'_>) -> Result<Var> {
        let target = Target::from_window(w, self.task)?;
        let x = w.input().values;
        let pw = ctx.pos_weight;
        let f = self.backbone.forward(tape, store, &x, &mut dropout_rng(ctx))?;
        self.head.loss(tape, store, f, &target, pw)
    }

    fn batch_pos_weight(&self, batch: &[&Window]) -> f64 {
        if self.task != TaskKind::Detection || !self.weight_positives {
            return 1.0;
        }
        let marks: Vec<Vec<f64>> = batch.iter().filter_map(|w| w.marks_f64()).collect();
        loss::pos_weight(marks.iter().map(Vec::as_slice))
    }
}

/// Next-token prediction on a causal transformer.
pub struct NextToken {
    pub backbone: Box<dyn Backbone>,
    pub recon: Linear,
}

impl NextToken {
    pub fn new(backbone: Box<dyn Backbone>, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Self> {
        let t = backbone.as_transformer().ok_or_else(|| {
            Error::Config(format!(
                "next-token pretraining needs the transformer backbone, not `{}`",
                backbone.kind()
            ))
        })?;
        if !t.config.causal {
            return Err(Error::Config(
                "next-token pretraining needs transformer.causal = true".into(),
            ));
        }
        let (h, m) = (t.config.hidden, t.config.token_len);
        let recon = Linear::new(&mut Scope::new(store, rng, format!("{PRETRAIN_PREFIX}ntp.")), h, m)?;
        Ok(Self { backbone, recon })
    }
}

impl Objective for NextToken {
    fn name(&self) -> String {
        format!("{}/ntp", self.backbone.kind())
    }

    fn sample_loss(&self, tape: &mut Tape, store: &ParamStore, w: &Window, ctx: &mut SampleCtx<'_>) -> Result<Var> {
        let t = self.backbone.as_transformer().expect("checked at construction");
        let (_, tokens) = t.tokenize(&w.input().values);
        let enc = t.encode(tape, store, &tokens, &[], &mut dropout_rng(ctx))?;
        let pred = self.recon.forward(tape, store, enc.tokens)?;
        loss::loss_ntp(tape, pred, &tokens)
    }
}

/// Masked-token prediction.
///
/// On the transformer, masked tokens get the learned mask embedding and a
/// linear `hidden → m` reconstructs them. Other backbones see the masked
/// spans zeroed in the input and reconstruct per sample through `d → 1`.
pub struct MaskedToken {
    pub backbone: Box<dyn Backbone>,
    pub recon: Linear,
    pub token_len: usize,
    pub mask_ratio: f64,
}

impl MaskedToken {
    pub fn new(
        backbone: Box<dyn Backbone>,
        token_len: usize,
        mask_ratio: f64,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if token_len == 0 || !(mask_ratio > 0.0 && mask_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "bad masking: token {token_len}, ratio {mask_ratio}"
            )));
        }
        let mut scope = Scope::new(store, rng, format!("{PRETRAIN_PREFIX}mtp."));
        let recon = match backbone.as_transformer() {
            Some(t) => Linear::new(&mut scope, t.config.hidden, t.config.token_len)?,
            None => Linear::new(&mut scope, backbone.out_dim(), 1)?,
        };
        let token_len = backbone.as_transformer().map_or(token_len, |t| t.config.token_len);
        Ok(Self {
            backbone,
            recon,
            token_len,
            mask_ratio,
        })
    }

    /// Sorted masked token indices: `max(1, round(ratio · n))` drawn uniformly.
    pub fn choose_mask(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let k = ((self.mask_ratio * n as f64).round() as usize).clamp(1, n);
        let mut idx = sample(rng, n, k).into_vec();
        idx.sort_unstable();
        idx
    }
}

impl Objective for MaskedToken {
    fn name(&self) -> String {
        format!("{}/mtp", self.backbone.kind())
    }

    fn sample_loss(&self, tape: &mut Tape, store: &ParamStore, w: &Window, ctx: &mut SampleCtx<'_>) -> Result<Var> {
        let x = w.input().values;
        let m = self.token_len;
        if let Some(t) = self.backbone.as_transformer() {
            let (n, tokens) = t.tokenize(&x);
            let masked = self.choose_mask(n, ctx.rng);
            let enc = t.encode(tape, store, &tokens, &masked, &mut dropout_rng(ctx))?;
            let pred = self.recon.forward(tape, store, enc.tokens)?;
            let picked = tape.select_rows(pred, &masked)?;
            let truth: Vec<f64> = masked
                .iter()
                .flat_map(|&i| tokens[i * m..(i + 1) * m].iter().copied())
                .collect();
            return loss::loss_mtp(tape, picked, &truth);
        }
        let n = x.len() / m;
        if n == 0 {
            return Err(Error::Contract(format!(
                "series of {} samples has no token of {m}",
                x.len()
            )));
        }
        let masked = self.choose_mask(n, ctx.rng);
        let mut input = x.clone();
        for &i in &masked {
            input[i * m..(i + 1) * m].fill(0.0);
        }
        let f = self.backbone.forward(tape, store, &input, &mut dropout_rng(ctx))?;
        let y = self.recon.forward(tape, store, f)?;
        let y = tape.slice_rows(y, 0, n * m)?;
        let y = tape.reshape(y, vec![n, m])?;
        let picked = tape.select_rows(y, &masked)?;
        let truth: Vec<f64> = masked
            .iter()
            .flat_map(|&i| x[i * m..(i + 1) * m].iter().copied())
            .collect();
        loss::loss_mtp(tape, picked, &truth)
    }
}
