//! Forward definitions of the recorded operations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tape::{Op, Tape, Var};
use crate::{Error, Result};

/// Elementwise functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unary {
    Relu,
    /// Tanh approximation of GELU.
    Gelu,
    Sigmoid,
    Exp,
    Log,
    Tanh,
    Square,
}

impl Unary {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "relu" => Unary::Relu,
            "gelu" => Unary::Gelu,
            "sigmoid" => Unary::Sigmoid,
            "exp" => Unary::Exp,
            "log" => Unary::Log,
            "tanh" => Unary::Tanh,
            "square" => Unary::Square,
            _ => return None,
        })
    }

    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Relu => x.max(0.0),
            Unary::Gelu => {
                let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
                0.5 * x * (1.0 + t)
            }
            Unary::Sigmoid => sigmoid(x),
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Tanh => x.tanh(),
            Unary::Square => x * x,
        }
    }

    /// Derivative at input `x` with output `y`.
    pub(crate) fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Gelu => {
                let inner = GELU_C * (x + 0.044715 * x * x * x);
                let t = inner.tanh();
                let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
            }
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Exp => y,
            Unary::Log => 1.0 / x,
            Unary::Tanh => 1.0 - y * y,
            Unary::Square => 2.0 * x,
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReduceKind {
    Sum,
    Mean,
}

fn matrix(op: &'static str, shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [r, c] => Ok((*r, *c)),
        _ => Err(Error::geometry(op, format!("expected a matrix, got shape {shape:?}"))),
    }
}

// out[p×r] += a[p×q] · b[q×r]
pub(crate) fn gemm(a: &[f64], b: &[f64], out: &mut [f64], p: usize, q: usize, r: usize) {
    for i in 0..p {
        let orow = &mut out[i * r..(i + 1) * r];
        let arow = &a[i * q..(i + 1) * q];
        for (k, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[k * r..(k + 1) * r];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

// out[q×r] += aᵀ · g, with a[p×q], g[p×r]
pub(crate) fn gemm_at_b(a: &[f64], g: &[f64], out: &mut [f64], p: usize, q: usize, r: usize) {
    for i in 0..p {
        let grow = &g[i * r..(i + 1) * r];
        for k in 0..q {
            let av = a[i * q + k];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[k * r..(k + 1) * r];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

// out[p×q] += g · bᵀ, with g[p×r], b[q×r]
pub(crate) fn gemm_a_bt(g: &[f64], b: &[f64], out: &mut [f64], p: usize, q: usize, r: usize) {
    for i in 0..p {
        let grow = &g[i * r..(i + 1) * r];
        for k in 0..q {
            let brow = &b[k * r..(k + 1) * r];
            let dot: f64 = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
            out[i * q + k] += dot;
        }
    }
}

impl Tape {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    /// Matrix product `[p×q]·[q×r]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, q) = matrix("matmul", self.shape(a))?;
        let (q2, r) = matrix("matmul", self.shape(b))?;
        if q != q2 {
            return Err(Error::dim("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; p * r];
        gemm(self.value(a), self.value(b), &mut out, p, q, r);
        self.push("matmul", vec![p, r], out, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        self.push("add", self.shape(a).to_vec(), out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        self.push("sub", self.shape(a).to_vec(), out, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        self.push("mul", self.shape(a).to_vec(), out, Op::Mul(a, b), &[a, b])
    }

    fn row_broadcast_check(&self, op: &'static str, x: Var, row: Var) -> Result<usize> {
        let h = self.value(row).len();
        let xs = self.shape(x);
        if self.shape(row).len() != 1 || xs.last() != Some(&h) {
            return Err(Error::dim(op, xs, self.shape(row)));
        }
        Ok(h)
    }

    /// Adds a vector `[h]` to every row of `[.. × h]`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let h = self.row_broadcast_check("add_row", x, bias)?;
        let b = self.value(bias);
        let out = self.value(x).iter().enumerate().map(|(i, v)| v + b[i % h]).collect();
        self.push("add_row", self.shape(x).to_vec(), out, Op::AddRow(x, bias), &[x, bias])
    }

    /// Multiplies every row of `[.. × h]` elementwise by a vector `[h]`.
    pub fn mul_row(&mut self, x: Var, gain: Var) -> Result<Var> {
        let h = self.row_broadcast_check("mul_row", x, gain)?;
        let g = self.value(gain);
        let out = self.value(x).iter().enumerate().map(|(i, v)| v * g[i % h]).collect();
        self.push("mul_row", self.shape(x).to_vec(), out, Op::MulRow(x, gain), &[x, gain])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let out = self.value(x).iter().map(|v| v * c).collect();
        self.push("scale", self.shape(x).to_vec(), out, Op::Scale(x, c), &[x])
    }

    /// Multiplies by a one-element tensor.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::dim("mul_scalar", self.shape(x), self.shape(s)));
        }
        let c = self.value(s)[0];
        let out = self.value(x).iter().map(|v| v * c).collect();
        self.push("mul_scalar", self.shape(x).to_vec(), out, Op::MulScalar(x, s), &[x, s])
    }

    pub fn unary(&mut self, x: Var, f: Unary) -> Result<Var> {
        if f == Unary::Log {
            if let Some(bad) = self.value(x).iter().find(|v| **v <= 0.0) {
                return Err(Error::Domain {
                    op: "log",
                    detail: format!("non-positive input {bad}"),
                });
            }
        }
        let out = self.value(x).iter().map(|&v| f.apply(v)).collect();
        self.push("unary", self.shape(x).to_vec(), out, Op::Unary(x, f), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Relu)
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Gelu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Exp)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Log)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Square)
    }

    /// Sum or mean along `axis`; the axis is removed from the shape
    /// (a rank-1 input reduces to shape `[1]`).
    pub fn reduce(&mut self, x: Var, kind: ReduceKind, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::geometry(
                "reduce",
                format!("axis {axis} out of range for shape {shape:?}"),
            ));
        }
        let n = shape[axis];
        if n == 0 {
            return Err(Error::geometry("reduce", "empty reduction axis"));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let xs = self.value(x);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..n {
                let src = &xs[(o * n + j) * inner..(o * n + j + 1) * inner];
                let dst = &mut out[o * inner..(o + 1) * inner];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
            }
        }
        if kind == ReduceKind::Mean {
            let inv = 1.0 / n as f64;
            out.iter_mut().for_each(|v| *v *= inv);
        }
        let mut out_shape: Vec<usize> = shape[..axis].iter().chain(&shape[axis + 1..]).copied().collect();
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        self.push(
            "reduce",
            out_shape,
            out,
            Op::Reduce {
                x,
                kind,
                outer,
                n,
                inner,
            },
            &[x],
        )
    }

    /// Reduction over every element to shape `[1]`.
    pub fn reduce_all(&mut self, x: Var, kind: ReduceKind) -> Result<Var> {
        let n = self.value(x).len();
        let flat = self.reshape(x, vec![n])?;
        self.reduce(flat, kind, 0)
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        self.reduce_all(x, ReduceKind::Mean)
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        self.reduce_all(x, ReduceKind::Sum)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = matrix("transpose", self.shape(x))?;
        let xs = self.value(x);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xs[i * c + j];
            }
        }
        self.push("transpose", vec![c, r], out, Op::Transpose(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(Error::dim("reshape", self.shape(x), &shape));
        }
        let out = self.value(x).to_vec();
        self.push("reshape", shape, out, Op::Reshape(x), &[x])
    }

    /// Cross-correlation of `x [C_in×L]` with `w [C_out×C_in×K]` under zero
    /// padding; output `[C_out × (L + 2·pad − K + 1)]`.
    pub fn conv1d(&mut self, x: Var, w: Var, pad: usize) -> Result<Var> {
        let (c_in, l) = matrix("conv1d", self.shape(x))?;
        let (c_out, c_in2, k) = match self.shape(w) {
            [a, b, c] => (*a, *b, *c),
            s => return Err(Error::geometry("conv1d", format!("kernel must be rank 3, got {s:?}"))),
        };
        if c_in != c_in2 {
            return Err(Error::dim("conv1d", self.shape(x), self.shape(w)));
        }
        if k % 2 == 0 {
            return Err(Error::geometry("conv1d", format!("kernel size {k} must be odd")));
        }
        if k > l + 2 * pad {
            return Err(Error::geometry(
                "conv1d",
                format!("kernel size {k} exceeds padded length {}", l + 2 * pad),
            ));
        }
        let l_out = l + 2 * pad - k + 1;
        let xs = self.value(x);
        let ws = self.value(w);
        let mut out = vec![0.0; c_out * l_out];
        for o in 0..c_out {
            let orow = &mut out[o * l_out..(o + 1) * l_out];
            for c in 0..c_in {
                let xrow = &xs[c * l..(c + 1) * l];
                for kk in 0..k {
                    let wv = ws[(o * c_in + c) * k + kk];
                    let (t0, t1) = conv_span(kk, pad, l, l_out);
                    if t0 >= t1 {
                        continue;
                    }
                    let src = &xrow[t0 + kk - pad..t1 + kk - pad];
                    orow[t0..t1].iter_mut().zip(src).for_each(|(d, s)| *d += wv * s);
                }
            }
        }
        self.push("conv1d", vec![c_out, l_out], out, Op::Conv1d { x, w, pad }, &[x, w])
    }

    /// Averages adjacent time steps of `[L×h]` into `[L/2 × h]`.
    pub fn patch(&mut self, x: Var) -> Result<Var> {
        let (l, h) = matrix("patch", self.shape(x))?;
        if l % 2 != 0 {
            return Err(Error::geometry("patch", format!("odd length {l}")));
        }
        let xs = self.value(x);
        let mut out = vec![0.0; l / 2 * h];
        for k in 0..l / 2 {
            for j in 0..h {
                out[k * h + j] = 0.5 * (xs[2 * k * h + j] + xs[(2 * k + 1) * h + j]);
            }
        }
        self.push("patch", vec![l / 2, h], out, Op::Patch(x), &[x])
    }

    /// Emits `(c1·e_k, c2·e_k)` for every row `e_k` of `[L×h]`, giving `[2L×h]`.
    pub fn unpatch(&mut self, x: Var, c1: Var, c2: Var) -> Result<Var> {
        let (l, h) = matrix("unpatch", self.shape(x))?;
        if self.value(c1).len() != 1 || self.value(c2).len() != 1 {
            return Err(Error::geometry("unpatch", "c1 and c2 must be scalars"));
        }
        let (a, b) = (self.value(c1)[0], self.value(c2)[0]);
        let xs = self.value(x);
        let mut out = vec![0.0; 2 * l * h];
        for k in 0..l {
            for j in 0..h {
                let v = xs[k * h + j];
                out[2 * k * h + j] = a * v;
                out[(2 * k + 1) * h + j] = b * v;
            }
        }
        self.push("unpatch", vec![2 * l, h], out, Op::Unpatch { x, c1, c2 }, &[x, c1, c2])
    }

    /// Normalizes each row of `[n×h]` to zero mean and unit variance, then
    /// applies `gamma` and `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (n, h) = matrix("layer_norm", self.shape(x))?;
        if self.shape(gamma) != [h] || self.shape(beta) != [h] {
            return Err(Error::dim("layer_norm", self.shape(x), self.shape(gamma)));
        }
        let xs = self.value(x);
        let gs = self.value(gamma);
        let bs = self.value(beta);
        let mut xhat = vec![0.0; n * h];
        let mut inv_std = vec![0.0; n];
        let mut out = vec![0.0; n * h];
        for i in 0..n {
            let row = &xs[i * h..(i + 1) * h];
            let mean = row.iter().sum::<f64>() / h as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..h {
                let xh = (row[j] - mean) * is;
                xhat[i * h + j] = xh;
                out[i * h + j] = xh * gs[j] + bs[j];
            }
        }
        self.push(
            "layer_norm",
            vec![n, h],
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    /// Row-wise softmax. With `causal`, row `i` only attends to columns
    /// `0..=i` and masked entries are exactly zero.
    pub fn softmax_rows(&mut self, x: Var, causal: bool) -> Result<Var> {
        let (n, c) = matrix("softmax", self.shape(x))?;
        let xs = self.value(x);
        let mut out = vec![0.0; n * c];
        for i in 0..n {
            let width = if causal { (i + 1).min(c) } else { c };
            let row = &xs[i * c..i * c + width];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (o, &v) in out[i * c..i * c + width].iter_mut().zip(row) {
                *o = (v - max).exp();
                total += *o;
            }
            out[i * c..i * c + width].iter_mut().for_each(|o| *o /= total);
        }
        self.push("softmax", vec![n, c], out, Op::Softmax(x), &[x])
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (n, c) = matrix("log_softmax", self.shape(x))?;
        let xs = self.value(x);
        let mut out = vec![0.0; n * c];
        for i in 0..n {
            let row = &xs[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for j in 0..c {
                out[i * c + j] = row[j] - lse;
            }
        }
        self.push("log_softmax", vec![n, c], out, Op::LogSoftmax(x), &[x])
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (n, c) = matrix("slice_rows", self.shape(x))?;
        if start > end || end > n {
            return Err(Error::geometry("slice_rows", format!("{start}..{end} of {n} rows")));
        }
        let out = self.value(x)[start * c..end * c].to_vec();
        self.push(
            "slice_rows",
            vec![end - start, c],
            out,
            Op::SliceRows { x, start },
            &[x],
        )
    }

    /// Gathers the listed rows (repeats allowed).
    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let (n, c) = matrix("select_rows", self.shape(x))?;
        if let Some(bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::geometry("select_rows", format!("row {bad} of {n}")));
        }
        let xs = self.value(x);
        let mut out = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            out.extend_from_slice(&xs[r * c..(r + 1) * c]);
        }
        self.push(
            "select_rows",
            vec![rows.len(), c],
            out,
            Op::SelectRows { x, rows: rows.to_vec() },
            &[x],
        )
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (n, c) = matrix("slice_cols", self.shape(x))?;
        if start > end || end > c {
            return Err(Error::geometry("slice_cols", format!("{start}..{end} of {c} cols")));
        }
        let xs = self.value(x);
        let w = end - start;
        let mut out = Vec::with_capacity(n * w);
        for i in 0..n {
            out.extend_from_slice(&xs[i * c + start..i * c + end]);
        }
        self.push("slice_cols", vec![n, w], out, Op::SliceCols { x, start }, &[x])
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::geometry("concat_cols", "no inputs"));
        };
        let (n, _) = matrix("concat_cols", self.shape(first))?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = matrix("concat_cols", self.shape(p))?;
            if r != n {
                return Err(Error::dim("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; n * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let ps = self.value(p);
            for i in 0..n {
                out[i * total + offset..i * total + offset + w].copy_from_slice(&ps[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        self.push(
            "concat_cols",
            vec![n, total],
            out,
            Op::ConcatCols(parts.to_vec()),
            parts,
        )
    }

    /// Replaces the listed rows of `[n×h]` by the vector `fill [h]`.
    pub fn replace_rows(&mut self, x: Var, fill: Var, rows: &[usize]) -> Result<Var> {
        let (n, h) = matrix("replace_rows", self.shape(x))?;
        if self.shape(fill) != [h] {
            return Err(Error::dim("replace_rows", self.shape(x), self.shape(fill)));
        }
        let mut seen = vec![false; n];
        for &r in rows {
            if r >= n || seen[r] {
                return Err(Error::geometry("replace_rows", format!("invalid or repeated row {r}")));
            }
            seen[r] = true;
        }
        let mut out = self.value(x).to_vec();
        let fs = self.value(fill).to_vec();
        for &r in rows {
            out[r * h..(r + 1) * h].copy_from_slice(&fs);
        }
        self.push(
            "replace_rows",
            vec![n, h],
            out,
            Op::ReplaceRows {
                x,
                fill,
                rows: rows.to_vec(),
            },
            &[x, fill],
        )
    }

    /// Mean binary cross-entropy of sigmoid(`logits`) against `targets`,
    /// with the positive term scaled by `pos_weight`. Returns shape `[1]`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64], pos_weight: f64) -> Result<Var> {
        let zs = self.value(logits);
        if zs.len() != targets.len() || zs.is_empty() {
            return Err(Error::dim("bce_with_logits", self.shape(logits), &[targets.len()]));
        }
        let n = zs.len() as f64;
        let total: f64 = zs
            .iter()
            .zip(targets)
            .map(|(&z, &y)| pos_weight * y * softplus(-z) + (1.0 - y) * softplus(z))
            .sum();
        self.push(
            "bce_with_logits",
            vec![1],
            vec![total / n],
            Op::BceLogits {
                logits,
                targets: targets.to_vec(),
                pos_weight,
            },
            &[logits],
        )
    }

    /// Inverted dropout; `rate == 0` records nothing and returns `x`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if rate <= 0.0 {
            return Ok(x);
        }
        if rate >= 1.0 {
            return Err(Error::Contract(format!("dropout rate {rate} must be < 1")));
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let out = self.value(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.push("dropout", self.shape(x).to_vec(), out, Op::Dropout { x, mask }, &[x])
    }
}

/// Output positions `t0..t1` for which `t + kk - pad` is a valid input index.
pub(crate) fn conv_span(kk: usize, pad: usize, l: usize, l_out: usize) -> (usize, usize) {
    let t0 = pad.saturating_sub(kk);
    let t1 = (l + pad).saturating_sub(kk).min(l_out);
    (t0, t1)
}
