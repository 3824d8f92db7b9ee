//! Streaming Gaussian fits with an exact merge rule.

use rayon::prelude::*;

use crate::{Error, Result};

/// Samples per independently accumulated chunk in [`fit_gaussian`]. Fixed so
/// the floating-point result does not depend on the thread count.
const CHUNK: usize = 64;

/// Running count, mean and scatter matrix (sum of centered outer products).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub count: usize,
    pub mean: Vec<f64>,
    /// Row-major `[k×k]`.
    pub scatter: Vec<f64>,
}

impl GaussianStats {
    pub fn new(k: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; k],
            scatter: vec![0.0; k * k],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Welford update with one sample.
    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        let k = self.dim();
        if x.len() != k {
            return Err(Error::Contract(format!(
                "sample of dim {} into stats of dim {k}",
                x.len()
            )));
        }
        self.count += 1;
        let n = self.count as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d / n;
        }
        for i in 0..k {
            let after = x[i] - self.mean[i];
            for j in 0..k {
                self.scatter[j * k + i] += delta[j] * after;
            }
        }
        Ok(())
    }

    /// Pooled statistics of both sample sets.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        let k = self.dim();
        if other.dim() != k {
            return Err(Error::Contract(format!(
                "cannot merge stats of dim {k} and {}",
                other.dim()
            )));
        }
        if self.count == 0 {
            return Ok(other.clone());
        }
        if other.count == 0 {
            return Ok(self.clone());
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        let mean = self.mean.iter().zip(&delta).map(|(a, d)| a + d * nb / n).collect();
        let w = na * nb / n;
        let mut scatter = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                let idx = i * k + j;
                scatter[idx] = self.scatter[idx] + other.scatter[idx] + delta[i] * delta[j] * w;
            }
        }
        Ok(Self {
            count: self.count + other.count,
            mean,
            scatter,
        })
    }

    /// Unbiased covariance `scatter / (N−1)`, symmetrized.
    pub fn covariance(&self) -> Result<Vec<f64>> {
        if self.count < 2 {
            return Err(Error::Contract(format!(
                "covariance needs at least 2 samples, have {}",
                self.count
            )));
        }
        let k = self.dim();
        let denom = (self.count - 1) as f64;
        let mut c = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                c[i * k + j] = 0.5 * (self.scatter[i * k + j] + self.scatter[j * k + i]) / denom;
            }
        }
        Ok(c)
    }
}

/// Sample mean and unbiased covariance of `features`, accumulated in fixed
/// chunks and merged in order.
pub fn fit_gaussian(features: &[Vec<f64>]) -> Result<GaussianStats> {
    if features.len() < 2 {
        return Err(Error::Contract(format!(
            "need at least 2 samples, got {}",
            features.len()
        )));
    }
    let k = features[0].len();
    let parts: Vec<Result<GaussianStats>> = features
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut s = GaussianStats::new(k);
            for x in chunk {
                s.push(x)?;
            }
            Ok(s)
        })
        .collect();
    let mut total = GaussianStats::new(k);
    for p in parts {
        total = total.merge(&p?)?;
    }
    Ok(total)
}
