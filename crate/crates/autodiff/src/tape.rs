use crate::ops::{ReduceKind, Unary};
use crate::tensor::{ParamId, ParamStore};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    MulScalar(Var, Var),
    Unary(Var, Unary),
    Reduce {
        x: Var,
        kind: ReduceKind,
        outer: usize,
        n: usize,
        inner: usize,
    },
    Transpose(Var),
    Reshape(Var),
    Conv1d {
        x: Var,
        w: Var,
        pad: usize,
    },
    Patch(Var),
    Unpatch {
        x: Var,
        c1: Var,
        c2: Var,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Softmax(Var),
    LogSoftmax(Var),
    SliceRows {
        x: Var,
        start: usize,
    },
    SelectRows {
        x: Var,
        rows: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    ReplaceRows {
        x: Var,
        fill: Var,
        rows: Vec<usize>,
    },
    BceLogits {
        logits: Var,
        targets: Vec<f64>,
        pos_weight: f64,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub op: Op,
    pub needs_grad: bool,
}

/// Record of one forward pass.
///
/// Nodes are appended in evaluation order, so every operation's inputs have
/// smaller indices than the operation itself and a single reverse sweep
/// visits each node exactly once.
#[derive(Debug, Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a non-differentiable input.
    pub fn constant(&mut self, shape: Vec<usize>, value: Vec<f64>) -> Result<Var> {
        if shape.iter().product::<usize>() != value.len() {
            return Err(Error::dim("constant", &shape, &[value.len()]));
        }
        Ok(self.push_unchecked(shape, value, Op::Constant, false))
    }

    /// Records a differentiable leaf holding a copy of `data`. Gradients for
    /// such leaves are reachable through [`Gradients::wrt`].
    pub fn leaf(&mut self, shape: Vec<usize>, value: Vec<f64>) -> Result<Var> {
        if shape.iter().product::<usize>() != value.len() {
            return Err(Error::dim("leaf", &shape, &[value.len()]));
        }
        Ok(self.push_unchecked(shape, value, Op::Constant, true))
    }

    /// Copies a parameter onto the tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let t = store.get(id);
        self.push_unchecked(t.shape.clone(), t.data.clone(), Op::Param(id), t.requires_grad)
    }

    pub(crate) fn push_unchecked(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Appends the result of an operation. In debug builds the output is
    /// checked for NaN/Inf.
    pub(crate) fn push(
        &mut self,
        name: &'static str,
        shape: Vec<usize>,
        value: Vec<f64>,
        op: Op,
        inputs: &[Var],
    ) -> Result<Var> {
        if cfg!(debug_assertions) && value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: name });
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        Ok(self.push_unchecked(shape, value, op, needs_grad))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = &self.nodes[loss.0];
        if node.value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                node.shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            crate::backward::propagate(self, i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Runs [`Tape::backward`] and adds parameter gradients into `store`.
    /// Repeated calls accumulate.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let grads = self.backward(loss)?;
        store.accumulate(self, &grads);
        Ok(())
    }

    /// Parameter gradients of one sweep, detached from the tape so they can
    /// cross threads. Parameters copied onto the tape twice appear twice.
    pub fn param_grads(&self, grads: &Gradients) -> Vec<(ParamId, Vec<f64>)> {
        self.param_leaves()
            .filter_map(|(var, id)| grads.wrt(var).map(|g| (id, g.to_vec())))
            .collect()
    }

    pub(crate) fn param_leaves(&self) -> impl Iterator<Item = (Var, ParamId)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n.op {
            Op::Param(id) => Some((Var(i), id)),
            _ => None,
        })
    }
}

/// Gradients of one backward sweep, indexed by tape node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

impl ParamStore {
    /// Adds the gradients of every parameter leaf on `tape` into the store.
    pub fn accumulate(&mut self, tape: &Tape, grads: &Gradients) {
        for (var, id) in tape.param_leaves() {
            if let Some(g) = grads.wrt(var) {
                self.accumulate_raw(id, g);
            }
        }
    }

    /// Adds detached gradients from [`Tape::param_grads`].
    pub fn accumulate_detached(&mut self, grads: &[(ParamId, Vec<f64>)]) {
        for (id, g) in grads {
            self.accumulate_raw(*id, g);
        }
    }
}
