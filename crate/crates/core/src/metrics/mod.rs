//! Evaluation metrics: accuracy, event F1, MSE and the Fréchet distance
//! between extracted feature distributions.

pub mod eval;
pub mod events;
pub mod features;
pub mod frechet;
pub mod linalg;
pub mod report;
pub mod stats;

pub use eval::evaluate_task;
pub use events::{f1, match_events, nms_peaks, EventConfig, EventMatch};
pub use features::{circular_shift, extract_features, shift_probe, Extractor, ShiftRow};
pub use frechet::{ffd, trace_sqrt_product};
pub use report::{EvalReport, Metric};
pub use stats::{fit_gaussian, GaussianStats};

use crate::{Error, Result};

/// Fraction of exact matches.
pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.is_empty() || preds.len() != labels.len() {
        return Err(Error::Contract(format!(
            "accuracy over {} predictions and {} labels",
            preds.len(),
            labels.len()
        )));
    }
    Ok(preds.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / preds.len() as f64)
}

/// Mean of squared differences.
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Contract(format!(
            "mse over {} and {} values",
            pred.len(),
            truth.len()
        )));
    }
    Ok(pred.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1], &[0, 0]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 1, 1]).unwrap(), 0.75);
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mse(&[0.0], &[3.0]).unwrap(), 9.0);
        assert!(mse(&[0.0], &[1.0, 2.0]).is_err());
    }
}
