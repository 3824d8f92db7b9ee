//! Task and self-supervised losses as tape operations.
//!
//! Every loss returns a one-element node suitable for `backward`.

use ecgbench_autodiff::{Tape, Var};

use crate::{Error, Result};

/// Mean squared error between a prediction node and a constant target of the
/// same element count. With rows of equal length, this equals the mean over
/// rows of the per-row mean, so token losses need no extra normalization.
pub fn mse(tape: &mut Tape, pred: Var, target: &[f64]) -> Result<Var> {
    if tape.value(pred).len() != target.len() || target.is_empty() {
        return Err(Error::Contract(format!(
            "prediction has {} values, target {}",
            tape.value(pred).len(),
            target.len()
        )));
    }
    let t = tape.constant(tape.shape(pred).to_vec(), target.to_vec())?;
    let d = tape.sub(pred, t)?;
    let sq = tape.square(d)?;
    Ok(tape.mean_all(sq)?)
}

/// Next-token loss: row `i` of `pred` (`[n×m]`) is scored against token
/// `i+1` of `tokens`, for `i = 0..n-1`.
pub fn loss_ntp(tape: &mut Tape, pred: Var, tokens: &[f64]) -> Result<Var> {
    let shape = tape.shape(pred).to_vec();
    let [n, m] = shape[..] else {
        return Err(Error::Contract(format!(
            "next-token predictions must be a matrix, got {shape:?}"
        )));
    };
    if n < 2 {
        return Err(Error::Contract(format!(
            "next-token loss needs at least 2 tokens, got {n}"
        )));
    }
    if tokens.len() != n * m {
        return Err(Error::Contract(format!(
            "{} token values for {n}×{m} predictions",
            tokens.len()
        )));
    }
    let head = tape.slice_rows(pred, 0, n - 1)?;
    mse(tape, head, &tokens[m..])
}

/// Masked-token loss over `k` predicted rows `[k×m]` and their true tokens.
pub fn loss_mtp(tape: &mut Tape, pred_masked: Var, truth: &[f64]) -> Result<Var> {
    if tape.value(pred_masked).is_empty() {
        return Err(Error::Contract(
            "masked-token loss needs at least one masked token".into(),
        ));
    }
    mse(tape, pred_masked, truth)
}

/// Cross-entropy of `logits` (`[1×c]` or `[c]`) against class `label`.
pub fn loss_cls(tape: &mut Tape, logits: Var, label: usize) -> Result<Var> {
    let c = tape.value(logits).len();
    if label >= c {
        return Err(Error::Contract(format!("label {label} outside {c} classes")));
    }
    let row = tape.reshape(logits, vec![1, c])?;
    let lp = tape.log_softmax_rows(row)?;
    let picked = tape.slice_cols(lp, label, label + 1)?;
    let picked = tape.reshape(picked, vec![1])?;
    Ok(tape.scale(picked, -1.0)?)
}

/// Mean binary cross-entropy with logits; positives weighted by `pos_weight`.
pub fn loss_det(tape: &mut Tape, logits: Var, marks: &[f64], pos_weight: f64) -> Result<Var> {
    if let Some(bad) = marks.iter().find(|m| **m != 0.0 && **m != 1.0) {
        return Err(Error::Contract(format!("detection mark {bad} is not 0 or 1")));
    }
    Ok(tape.bce_with_logits(logits, marks, pos_weight)?)
}

/// Forecast MSE, normalized by the horizon length.
pub fn loss_forecast(tape: &mut Tape, pred: Var, future: &[f64]) -> Result<Var> {
    mse(tape, pred, future)
}

/// Generation MSE over time steps.
pub fn loss_gen(tape: &mut Tape, pred: Var, target: &[f64]) -> Result<Var> {
    mse(tape, pred, target)
}

/// `#negatives / #positives` over all marks of a batch; 1 when either count
/// is zero.
pub fn pos_weight<'a, I>(marks: I) -> f64
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let (mut pos, mut neg) = (0usize, 0usize);
    for m in marks {
        for &v in m {
            if v > 0.5 {
                pos += 1;
            } else {
                neg += 1;
            }
        }
    }
    if pos == 0 || neg == 0 {
        1.0
    } else {
        neg as f64 / pos as f64
    }
}
