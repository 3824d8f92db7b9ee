//! Reverse rules for every recorded operation.

use crate::ops::{conv_span, gemm_a_bt, gemm_at_b, sigmoid, ReduceKind};
use crate::tape::{Op, Tape, Var};

type Grads = Vec<Option<Vec<f64>>>;

/// Returns the gradient buffer of `v`, or `None` if `v` does not need one.
fn slot<'g>(tape: &Tape, grads: &'g mut Grads, v: Var) -> Option<&'g mut [f64]> {
    let node = &tape.nodes[v.0];
    if !node.needs_grad {
        return None;
    }
    Some(
        grads[v.0]
            .get_or_insert_with(|| vec![0.0; node.value.len()])
            .as_mut_slice(),
    )
}

fn add_into(tape: &Tape, grads: &mut Grads, v: Var, g: &[f64]) {
    if let Some(dst) = slot(tape, grads, v) {
        dst.iter_mut().zip(g).for_each(|(d, s)| *d += s);
    }
}

pub(crate) fn propagate(tape: &Tape, i: usize, g: &[f64], grads: &mut Grads) {
    let node = &tape.nodes[i];
    let val = |v: Var| tape.nodes[v.0].value.as_slice();
    let shape = |v: Var| tape.nodes[v.0].shape.as_slice();

    match &node.op {
        Op::Constant | Op::Param(_) => {}

        Op::MatMul(a, b) => {
            let (p, q) = (shape(*a)[0], shape(*a)[1]);
            let r = shape(*b)[1];
            if let Some(da) = slot(tape, grads, *a) {
                gemm_a_bt(g, val(*b), da, p, q, r);
            }
            if let Some(db) = slot(tape, grads, *b) {
                gemm_at_b(val(*a), g, db, p, q, r);
            }
        }

        Op::Add(a, b) => {
            add_into(tape, grads, *a, g);
            add_into(tape, grads, *b, g);
        }

        Op::Sub(a, b) => {
            add_into(tape, grads, *a, g);
            if let Some(db) = slot(tape, grads, *b) {
                db.iter_mut().zip(g).for_each(|(d, s)| *d -= s);
            }
        }

        Op::Mul(a, b) => {
            if let Some(da) = slot(tape, grads, *a) {
                for ((d, gv), bv) in da.iter_mut().zip(g).zip(val(*b)) {
                    *d += gv * bv;
                }
            }
            if let Some(db) = slot(tape, grads, *b) {
                for ((d, gv), av) in db.iter_mut().zip(g).zip(val(*a)) {
                    *d += gv * av;
                }
            }
        }

        Op::AddRow(x, bias) => {
            add_into(tape, grads, *x, g);
            let h = val(*bias).len();
            if let Some(db) = slot(tape, grads, *bias) {
                for (k, gv) in g.iter().enumerate() {
                    db[k % h] += gv;
                }
            }
        }

        Op::MulRow(x, gain) => {
            let h = val(*gain).len();
            let gs = val(*gain);
            if let Some(dx) = slot(tape, grads, *x) {
                for (k, (d, gv)) in dx.iter_mut().zip(g).enumerate() {
                    *d += gv * gs[k % h];
                }
            }
            let xs = val(*x);
            if let Some(dgain) = slot(tape, grads, *gain) {
                for (k, (gv, xv)) in g.iter().zip(xs).enumerate() {
                    dgain[k % h] += gv * xv;
                }
            }
        }

        Op::Scale(x, c) => {
            if let Some(dx) = slot(tape, grads, *x) {
                dx.iter_mut().zip(g).for_each(|(d, gv)| *d += c * gv);
            }
        }

        Op::MulScalar(x, s) => {
            let c = val(*s)[0];
            if let Some(dx) = slot(tape, grads, *x) {
                dx.iter_mut().zip(g).for_each(|(d, gv)| *d += c * gv);
            }
            let dot: f64 = g.iter().zip(val(*x)).map(|(a, b)| a * b).sum();
            if let Some(ds) = slot(tape, grads, *s) {
                ds[0] += dot;
            }
        }

        Op::Unary(x, f) => {
            let xs = val(*x);
            let ys = node.value.as_slice();
            if let Some(dx) = slot(tape, grads, *x) {
                for k in 0..dx.len() {
                    dx[k] += g[k] * f.derivative(xs[k], ys[k]);
                }
            }
        }

        Op::Reduce {
            x,
            kind,
            outer,
            n,
            inner,
        } => {
            let scale = match kind {
                ReduceKind::Sum => 1.0,
                ReduceKind::Mean => 1.0 / *n as f64,
            };
            if let Some(dx) = slot(tape, grads, *x) {
                for o in 0..*outer {
                    let src = &g[o * inner..(o + 1) * inner];
                    for j in 0..*n {
                        let dst = &mut dx[(o * n + j) * inner..(o * n + j + 1) * inner];
                        dst.iter_mut().zip(src).for_each(|(d, s)| *d += scale * s);
                    }
                }
            }
        }

        Op::Transpose(x) => {
            let (r, c) = (shape(*x)[0], shape(*x)[1]);
            if let Some(dx) = slot(tape, grads, *x) {
                for i in 0..r {
                    for j in 0..c {
                        dx[i * c + j] += g[j * r + i];
                    }
                }
            }
        }

        Op::Reshape(x) => add_into(tape, grads, *x, g),

        Op::Conv1d { x, w, pad } => {
            let (c_in, l) = (shape(*x)[0], shape(*x)[1]);
            let (c_out, k) = (shape(*w)[0], shape(*w)[2]);
            let l_out = node.shape[1];
            let (xs, ws) = (val(*x), val(*w));
            if let Some(dx) = slot(tape, grads, *x) {
                for o in 0..c_out {
                    let grow = &g[o * l_out..(o + 1) * l_out];
                    for c in 0..c_in {
                        for kk in 0..k {
                            let wv = ws[(o * c_in + c) * k + kk];
                            let (t0, t1) = conv_span(kk, *pad, l, l_out);
                            if t0 >= t1 {
                                continue;
                            }
                            let dst = &mut dx[c * l + t0 + kk - pad..c * l + t1 + kk - pad];
                            dst.iter_mut().zip(&grow[t0..t1]).for_each(|(d, s)| *d += wv * s);
                        }
                    }
                }
            }
            if let Some(dw) = slot(tape, grads, *w) {
                for o in 0..c_out {
                    let grow = &g[o * l_out..(o + 1) * l_out];
                    for c in 0..c_in {
                        let xrow = &xs[c * l..(c + 1) * l];
                        for kk in 0..k {
                            let (t0, t1) = conv_span(kk, *pad, l, l_out);
                            if t0 >= t1 {
                                continue;
                            }
                            let src = &xrow[t0 + kk - pad..t1 + kk - pad];
                            let dot: f64 = grow[t0..t1].iter().zip(src).map(|(a, b)| a * b).sum();
                            dw[(o * c_in + c) * k + kk] += dot;
                        }
                    }
                }
            }
        }

        Op::Patch(x) => {
            let h = shape(*x)[1];
            let half = node.shape[0];
            if let Some(dx) = slot(tape, grads, *x) {
                for kk in 0..half {
                    for j in 0..h {
                        let gv = 0.5 * g[kk * h + j];
                        dx[2 * kk * h + j] += gv;
                        dx[(2 * kk + 1) * h + j] += gv;
                    }
                }
            }
        }

        Op::Unpatch { x, c1, c2 } => {
            let (l, h) = (shape(*x)[0], shape(*x)[1]);
            let (a, b) = (val(*c1)[0], val(*c2)[0]);
            let xs = val(*x);
            if let Some(dx) = slot(tape, grads, *x) {
                for kk in 0..l {
                    for j in 0..h {
                        dx[kk * h + j] += a * g[2 * kk * h + j] + b * g[(2 * kk + 1) * h + j];
                    }
                }
            }
            let mut da = 0.0;
            let mut db = 0.0;
            for kk in 0..l {
                for j in 0..h {
                    let v = xs[kk * h + j];
                    da += v * g[2 * kk * h + j];
                    db += v * g[(2 * kk + 1) * h + j];
                }
            }
            if let Some(d) = slot(tape, grads, *c1) {
                d[0] += da;
            }
            if let Some(d) = slot(tape, grads, *c2) {
                d[0] += db;
            }
        }

        Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        } => {
            let (n, h) = (node.shape[0], node.shape[1]);
            let gs = val(*gamma);
            if let Some(dx) = slot(tape, grads, *x) {
                let hf = h as f64;
                for i in 0..n {
                    let xh = &xhat[i * h..(i + 1) * h];
                    let gr = &g[i * h..(i + 1) * h];
                    let mut sum_d = 0.0;
                    let mut sum_dx = 0.0;
                    for j in 0..h {
                        let d = gr[j] * gs[j];
                        sum_d += d;
                        sum_dx += d * xh[j];
                    }
                    for j in 0..h {
                        let d = gr[j] * gs[j];
                        dx[i * h + j] += inv_std[i] / hf * (hf * d - sum_d - xh[j] * sum_dx);
                    }
                }
            }
            if let Some(dg) = slot(tape, grads, *gamma) {
                for (k, gv) in g.iter().enumerate() {
                    dg[k % h] += gv * xhat[k];
                }
            }
            if let Some(db) = slot(tape, grads, *beta) {
                for (k, gv) in g.iter().enumerate() {
                    db[k % h] += gv;
                }
            }
        }

        Op::Softmax(x) => {
            let c = node.shape[1];
            let ys = node.value.as_slice();
            if let Some(dx) = slot(tape, grads, *x) {
                for (row, (yr, gr)) in ys.chunks(c).zip(g.chunks(c)).enumerate() {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        dx[row * c + j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
        }

        Op::LogSoftmax(x) => {
            let c = node.shape[1];
            let ys = node.value.as_slice();
            if let Some(dx) = slot(tape, grads, *x) {
                for (row, (yr, gr)) in ys.chunks(c).zip(g.chunks(c)).enumerate() {
                    let total: f64 = gr.iter().sum();
                    for j in 0..c {
                        dx[row * c + j] += gr[j] - yr[j].exp() * total;
                    }
                }
            }
        }

        Op::SliceRows { x, start } => {
            let c = node.shape[1];
            if let Some(dx) = slot(tape, grads, *x) {
                let dst = &mut dx[start * c..start * c + g.len()];
                dst.iter_mut().zip(g).for_each(|(d, s)| *d += s);
            }
        }

        Op::SelectRows { x, rows } => {
            let c = node.shape[1];
            if let Some(dx) = slot(tape, grads, *x) {
                for (k, &r) in rows.iter().enumerate() {
                    let dst = &mut dx[r * c..(r + 1) * c];
                    dst.iter_mut().zip(&g[k * c..(k + 1) * c]).for_each(|(d, s)| *d += s);
                }
            }
        }

        Op::SliceCols { x, start } => {
            let c = shape(*x)[1];
            let (n, w) = (node.shape[0], node.shape[1]);
            if let Some(dx) = slot(tape, grads, *x) {
                for i in 0..n {
                    let dst = &mut dx[i * c + start..i * c + start + w];
                    dst.iter_mut().zip(&g[i * w..(i + 1) * w]).for_each(|(d, s)| *d += s);
                }
            }
        }

        Op::ConcatCols(parts) => {
            let (n, total) = (node.shape[0], node.shape[1]);
            let mut offset = 0;
            for &p in parts {
                let w = shape(p)[1];
                if let Some(dp) = slot(tape, grads, p) {
                    for i in 0..n {
                        let src = &g[i * total + offset..i * total + offset + w];
                        dp[i * w..(i + 1) * w].iter_mut().zip(src).for_each(|(d, s)| *d += s);
                    }
                }
                offset += w;
            }
        }

        Op::ReplaceRows { x, fill, rows } => {
            let h = node.shape[1];
            if let Some(dx) = slot(tape, grads, *x) {
                dx.iter_mut().zip(g).for_each(|(d, s)| *d += s);
                for &r in rows {
                    for j in 0..h {
                        dx[r * h + j] -= g[r * h + j];
                    }
                }
            }
            if let Some(df) = slot(tape, grads, *fill) {
                for &r in rows {
                    for j in 0..h {
                        df[j] += g[r * h + j];
                    }
                }
            }
        }

        Op::BceLogits {
            logits,
            targets,
            pos_weight,
        } => {
            let zs = val(*logits);
            let scale = g[0] / zs.len() as f64;
            if let Some(dz) = slot(tape, grads, *logits) {
                for k in 0..zs.len() {
                    let s = sigmoid(zs[k]);
                    let y = targets[k];
                    dz[k] += scale * (pos_weight * y * (s - 1.0) + (1.0 - y) * s);
                }
            }
        }

        Op::Dropout { x, mask } => {
            if let Some(dx) = slot(tape, grads, *x) {
                for k in 0..dx.len() {
                    dx[k] += g[k] * mask[k];
                }
            }
        }
    }
}
