//! Fréchet distance between Gaussian fits of feature sets.

use super::linalg::{matmul, sqrt_psd, sym_eigen, symmetrize, JITTER};
use super::stats::GaussianStats;
use crate::{Error, Result};

/// `Tr((Σ·Σ̂)^{1/2})`, computed as `Tr((S·Σ̂·S)^{1/2})` with `S = Σ^{1/2}`.
/// The two are similar matrices, and the second form stays symmetric.
///
/// Both covariances carry the diagonal [`JITTER`], so the result is exact for
/// the jittered pair and `trace_sqrt_product(Σ, Σ) = Tr(Σ) + k·JITTER`.
pub fn trace_sqrt_product(sigma: &[f64], sigma_hat: &[f64], k: usize) -> Result<f64> {
    if sigma.len() != k * k || sigma_hat.len() != k * k {
        return Err(Error::Contract(format!("covariances must be {k}×{k}")));
    }
    let s = sqrt_psd(sigma, k)?;
    let m = matmul(&matmul(&s, &jittered(sigma_hat, k), k), &s, k);
    let e = sym_eigen(&symmetrize(&m, k), k)?;
    Ok(e.values.iter().map(|l| l.max(0.0).sqrt()).sum())
}

fn jittered(a: &[f64], k: usize) -> Vec<f64> {
    let mut s = symmetrize(a, k);
    for i in 0..k {
        s[i * k + i] += JITTER;
    }
    s
}

/// `(‖μ−μ̂‖² + Tr(Σ + Σ̂ − 2(ΣΣ̂)^{1/2})) / √k`, clamped at 0. Evaluated
/// for the jittered covariances, so identical inputs give 0 up to rounding.
pub fn ffd(real: &GaussianStats, generated: &GaussianStats) -> Result<f64> {
    let k = real.dim();
    if generated.dim() != k {
        return Err(Error::Contract(format!(
            "feature dims differ: {k} vs {}",
            generated.dim()
        )));
    }
    if k == 0 {
        return Err(Error::Contract("zero-dimensional features".into()));
    }
    let (a, b) = (real.covariance()?, generated.covariance()?);
    let mean_term: f64 = real
        .mean
        .iter()
        .zip(&generated.mean)
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    let trace = |m: &[f64]| (0..k).map(|i| m[i * k + i] + JITTER).sum::<f64>();
    let cross = trace_sqrt_product(&a, &b, k)?;
    let d = (mean_term + trace(&a) + trace(&b) - 2.0 * cross) / (k as f64).sqrt();
    if !d.is_finite() {
        return Err(Error::Numeric(format!("Fréchet distance is {d}")));
    }
    Ok(d.max(0.0))
}
