//! Symmetric eigendecomposition (cyclic Jacobi) and PSD square roots.

use crate::{Error, Result};

const MAX_SWEEPS: usize = 100;
/// Diagonal jitter added before each decomposition.
pub const JITTER: f64 = 1e-10;

/// Eigenvalues with eigenvectors as the columns of a row-major `[k×k]`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn off_diagonal(a: &[f64], k: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                s += a[i * k + j] * a[i * k + j];
            }
        }
    }
    s.sqrt()
}

/// `(A + Aᵀ)/2`.
pub fn symmetrize(a: &[f64], k: usize) -> Vec<f64> {
    let mut s = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            s[i * k + j] = 0.5 * (a[i * k + j] + a[j * k + i]);
        }
    }
    s
}

/// Eigendecomposition of a symmetric `[k×k]` matrix.
pub fn sym_eigen(a: &[f64], k: usize) -> Result<SymEigen> {
    if a.len() != k * k {
        return Err(Error::Contract(format!("{} values for a {k}×{k} matrix", a.len())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("eigendecomposition input has non-finite entries".into()));
    }
    let mut a = a.to_vec();
    let mut v = vec![0.0; k * k];
    for i in 0..k {
        v[i * k + i] = 1.0;
    }
    let scale = frobenius(&a);
    let mut converged = scale == 0.0;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        if off_diagonal(&a, k) <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                let apq = a[p * k + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * k + q] - a[p * k + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..k {
                    let (arp, arq) = (a[r * k + p], a[r * k + q]);
                    a[r * k + p] = c * arp - s * arq;
                    a[r * k + q] = s * arp + c * arq;
                }
                for r in 0..k {
                    let (apr, aqr) = (a[p * k + r], a[q * k + r]);
                    a[p * k + r] = c * apr - s * aqr;
                    a[q * k + r] = s * apr + c * aqr;
                }
                a[p * k + q] = 0.0;
                a[q * k + p] = 0.0;
                for r in 0..k {
                    let (vrp, vrq) = (v[r * k + p], v[r * k + q]);
                    v[r * k + p] = c * vrp - s * vrq;
                    v[r * k + q] = s * vrp + c * vrq;
                }
            }
        }
    }
    if !converged && off_diagonal(&a, k) > 1e-15 * scale {
        let diag: Vec<f64> = (0..k).map(|i| a[i * k + i].abs()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        return Err(Error::Numeric(format!(
            "Jacobi eigendecomposition of a {k}×{k} matrix did not converge in {MAX_SWEEPS} sweeps \
             (off-diagonal norm {:.3e}, Frobenius norm {scale:.3e}, diagonal range [{min:.3e}, {max:.3e}])",
            off_diagonal(&a, k)
        )));
    }
    Ok(SymEigen {
        values: (0..k).map(|i| a[i * k + i]).collect(),
        vectors: v,
    })
}

/// Symmetrizes, adds [`JITTER`]·I and decomposes.
pub fn psd_eigen(a: &[f64], k: usize) -> Result<SymEigen> {
    let mut s = symmetrize(a, k);
    for i in 0..k {
        s[i * k + i] += JITTER;
    }
    sym_eigen(&s, k)
}

/// Principal square root of a PSD matrix, eigenvalues clamped at 0.
pub fn sqrt_psd(a: &[f64], k: usize) -> Result<Vec<f64>> {
    let e = psd_eigen(a, k)?;
    let roots: Vec<f64> = e.values.iter().map(|l| l.max(0.0).sqrt()).collect();
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            out[i * k + j] = (0..k)
                .map(|c| e.vectors[i * k + c] * roots[c] * e.vectors[j * k + c])
                .sum();
        }
    }
    Ok(out)
}

pub fn matmul(a: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        for l in 0..k {
            let ail = a[i * k + l];
            if ail == 0.0 {
                continue;
            }
            for j in 0..k {
                out[i * k + j] += ail * b[l * k + j];
            }
        }
    }
    out
}
