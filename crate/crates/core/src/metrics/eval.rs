//! Test-split evaluation of a trained task model.

use ecgbench_autodiff::ParamStore;
use rayon::prelude::*;

use super::events::{f1_counts, mark_events, match_events, nms_peaks, EventConfig};
use super::features::{ffd_between, Extractor};
use super::report::Metric;
use super::{accuracy, mse};
use crate::signal::window::Window;
use crate::tasks::{Target, TaskModel};
use crate::{Error, Result, TaskKind};

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate() {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Task metrics over `windows`: accuracy, event F1 (counts pooled over all
/// windows), or MSE plus FFD when an extractor is supplied.
pub fn evaluate_task(
    model: &TaskModel,
    store: &ParamStore,
    windows: &[Window],
    events: &EventConfig,
    extractor: Option<&Extractor>,
) -> Result<Vec<Metric>> {
    if windows.is_empty() {
        return Err(Error::Degenerate("no test windows".into()));
    }
    let outputs: Vec<(Vec<f64>, Target)> = windows
        .par_iter()
        .map(|w| {
            Ok((
                model.predict(store, &w.input().values)?,
                Target::from_window(w, model.task)?,
            ))
        })
        .collect::<Result<_>>()?;
    let metric = |name: &str, value: f64| Metric {
        name: name.into(),
        value,
    };
    Ok(match model.task {
        TaskKind::Classification => {
            let (preds, labels): (Vec<usize>, Vec<usize>) = outputs
                .iter()
                .map(|(out, t)| match t {
                    Target::Class(c) => (argmax(out), *c),
                    _ => unreachable!("classification target"),
                })
                .unzip();
            vec![metric("accuracy", accuracy(&preds, &labels)?)]
        }
        TaskKind::Detection => {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (out, t) in &outputs {
                let Target::Marks(marks) = t else {
                    unreachable!("detection target")
                };
                let probs: Vec<f64> = out.iter().map(|v| sigmoid(*v)).collect();
                let m = match_events(
                    &nms_peaks(&probs, events.threshold, events.min_distance),
                    &mark_events(marks),
                    events.tolerance,
                );
                tp += m.tp();
                fp += m.fp();
                fn_ += m.fn_();
            }
            vec![metric("f1", f1_counts(tp, fp, fn_))]
        }
        TaskKind::Forecasting | TaskKind::Generation => {
            let mut total = 0.0;
            let (mut preds, mut truths) = (Vec::new(), Vec::new());
            for (out, t) in outputs {
                let Target::Series(s) = t else {
                    unreachable!("series target")
                };
                total += mse(&out, &s)?;
                preds.push(out);
                truths.push(s);
            }
            let mut m = vec![metric("mse", total / windows.len() as f64)];
            if let Some(x) = extractor {
                m.push(metric("ffd", ffd_between(&truths, &preds, x)?));
            }
            m
        }
    })
}
