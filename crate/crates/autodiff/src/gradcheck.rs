//! Central-difference gradient checking.

use crate::tape::{Tape, Var};
use crate::tensor::ParamStore;
use crate::Result;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Denominator floor for the relative error, so that gradients at the
    /// scale of floating-point noise do not dominate the report.
    pub abs_floor: f64,
    /// Check at most this many coordinates per parameter (evenly spaced).
    pub max_coords_per_param: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            abs_floor: 1e-6,
            max_coords_per_param: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoordError {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<CoordError>,
    pub failures: Vec<CoordError>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn coords(len: usize, cap: Option<usize>) -> Vec<usize> {
    match cap {
        Some(c) if c < len => {
            let c = c.max(1);
            (0..c).map(|i| i * (len - 1) / (c - 1).max(1)).collect()
        }
        _ => (0..len).collect(),
    }
}

/// Compares the tape gradient of `build` against central differences for
/// every trainable parameter in `store`. The builder must be deterministic.
pub fn grad_check<F>(store: &mut ParamStore, build: F, cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut analytic = store.clone();
    analytic.zero_grad();
    let mut tape = Tape::new();
    let loss = build(&mut tape, &analytic)?;
    tape.backward_into(loss, &mut analytic)?;

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let l = build(&mut t, s)?;
        Ok(t.scalar(l))
    };

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
        failures: Vec::new(),
        tolerance: cfg.tolerance,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if !store.get(id).requires_grad {
            continue;
        }
        let name = store.name(id).to_string();
        let len = store.get(id).len();
        let grad = analytic.get(id).grad.clone().unwrap_or_else(|| vec![0.0; len]);
        for k in coords(len, cfg.max_coords_per_param) {
            let orig = store.get(id).data[k];
            store.get_mut(id).data[k] = orig + cfg.step;
            let plus = eval(store);
            store.get_mut(id).data[k] = orig - cfg.step;
            let minus = eval(store);
            store.get_mut(id).data[k] = orig;
            let numeric = (plus? - minus?) / (2.0 * cfg.step);
            let a = grad[k];
            let denom = a.abs().max(numeric.abs()).max(cfg.abs_floor);
            let rel = (a - numeric).abs() / denom;
            report.checked += 1;
            let err = CoordError {
                param: name.clone(),
                index: k,
                analytic: a,
                numeric,
                rel_error: rel,
            };
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some(err.clone());
            }
            if rel > cfg.tolerance {
                report.failures.push(err);
            }
        }
    }
    Ok(report)
}
