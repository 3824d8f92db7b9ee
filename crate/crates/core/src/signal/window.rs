//! Fixed-length windows with task payloads.
//!
//! Windows hold raw samples; z-score normalization happens when a window is
//! fed to a model (see [`Window::input`] and friends).

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::Record;
use crate::{Error, Result, TaskKind};

pub const WINDOW_LEN: usize = 500;
pub const HORIZON: usize = 100;
pub const DEFAULT_STRIDE: usize = 250;
/// Each annotation marks itself and this many samples either side.
pub const MARK_DILATION: usize = 1;
const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub record_id: String,
    pub channel: usize,
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Unlabeled,
    Class(u32),
    Marks(Vec<bool>),
    Future(Vec<f64>),
    Target(Vec<f64>),
}

impl Payload {
    pub fn task(&self) -> Option<TaskKind> {
        match self {
            Payload::Unlabeled => None,
            Payload::Class(_) => Some(TaskKind::Classification),
            Payload::Marks(_) => Some(TaskKind::Detection),
            Payload::Future(_) => Some(TaskKind::Forecasting),
            Payload::Target(_) => Some(TaskKind::Generation),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub signal: Vec<f64>,
    pub payload: Payload,
    pub provenance: Provenance,
}

/// Z-scored values with the statistics used.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Population z-score with the standard deviation clamped at `1e-8`.
pub fn zscore(xs: &[f64]) -> Normalized {
    let n = xs.len().max(1) as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n)
        .sqrt()
        .max(STD_FLOOR);
    Normalized {
        values: xs.iter().map(|v| (v - mean) / std).collect(),
        mean,
        std,
    }
}

impl Window {
    pub fn input(&self) -> Normalized {
        zscore(&self.signal)
    }

    /// Future samples expressed in the input window's normalized units.
    pub fn future_normalized(&self) -> Option<Vec<f64>> {
        let Payload::Future(f) = &self.payload else { return None };
        let n = self.input();
        Some(f.iter().map(|v| (v - n.mean) / n.std).collect())
    }

    /// Generation target normalized with its own statistics.
    pub fn target_normalized(&self) -> Option<Vec<f64>> {
        let Payload::Target(t) = &self.payload else { return None };
        Some(zscore(t).values)
    }

    pub fn marks_f64(&self) -> Option<Vec<f64>> {
        let Payload::Marks(m) = &self.payload else { return None };
        Some(m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
    }

    pub fn class(&self) -> Option<u32> {
        match self.payload {
            Payload::Class(c) => Some(c),
            _ => None,
        }
    }
}

fn provenance_of(r: &Record, start: usize) -> Provenance {
    match &r.source {
        Some(s) => Provenance {
            record_id: s.record_id.clone(),
            channel: s.channel,
            start,
        },
        None => Provenance {
            record_id: r.id.clone(),
            channel: 0,
            start,
        },
    }
}

/// Sliding windows over a single-channel 100 Hz record.
///
/// `task == None` produces unlabeled windows for self-supervised corpora.
/// Generation requires `companion`, the aligned target channel.
pub fn windowize(r: &Record, task: Option<TaskKind>, stride: usize, companion: Option<&Record>) -> Result<Vec<Window>> {
    if r.n_channels() != 1 {
        return Err(Error::Contract(format!(
            "windowize expects one channel, `{}` has {}",
            r.id,
            r.n_channels()
        )));
    }
    if stride == 0 {
        return Err(Error::Contract("window stride must be positive".into()));
    }
    let x = &r.channels[0];
    let n = x.len();
    let need = WINDOW_LEN
        + if task == Some(TaskKind::Forecasting) {
            HORIZON
        } else {
            0
        };
    let class = match task {
        Some(TaskKind::Classification) => Some(
            r.class_label
                .ok_or_else(|| Error::TaskConfig(format!("record `{}` has no class label", r.id)))?,
        ),
        _ => None,
    };
    let target = match task {
        Some(TaskKind::Generation) => {
            let c =
                companion.ok_or_else(|| Error::TaskConfig(format!("record `{}` has no generation companion", r.id)))?;
            if c.n_channels() != 1 || c.len() != n {
                return Err(Error::TaskConfig(format!(
                    "companion `{}` is not aligned with `{}` ({} vs {n} samples)",
                    c.id,
                    r.id,
                    c.len()
                )));
            }
            Some(&c.channels[0])
        }
        _ => None,
    };
    let mut out = Vec::new();
    if n < need {
        return Ok(out);
    }
    let mut start = 0;
    while start + need <= n {
        let signal = x[start..start + WINDOW_LEN].to_vec();
        let payload = match task {
            None => Payload::Unlabeled,
            Some(TaskKind::Classification) => Payload::Class(class.expect("checked above")),
            Some(TaskKind::Detection) => Payload::Marks(marks(r, start)),
            Some(TaskKind::Forecasting) => Payload::Future(x[start + WINDOW_LEN..start + need].to_vec()),
            Some(TaskKind::Generation) => {
                Payload::Target(target.expect("checked above")[start..start + WINDOW_LEN].to_vec())
            }
        };
        out.push(Window {
            signal,
            payload,
            provenance: provenance_of(r, start),
        });
        start += stride;
    }
    Ok(out)
}

fn marks(r: &Record, start: usize) -> Vec<bool> {
    let mut m = vec![false; WINDOW_LEN];
    for a in &r.annotations {
        let lo = a.index.saturating_sub(MARK_DILATION);
        let hi = a.index + MARK_DILATION;
        for i in lo..=hi {
            if i >= start && i < start + WINDOW_LEN {
                m[i - start] = true;
            }
        }
    }
    m
}

/// Pairs each input channel with its generation target, using the
/// `pair_channel` name carried by split records of the same source.
pub fn generation_pairs(splits: &[Record]) -> Result<Vec<(Record, Record)>> {
    let mut groups: BTreeMap<String, Vec<&Record>> = BTreeMap::new();
    for r in splits {
        let key = r.source.as_ref().map_or_else(|| r.id.clone(), |s| s.record_id.clone());
        groups.entry(key).or_default().push(r);
    }
    let mut out = Vec::new();
    for (id, group) in groups {
        let pair = group
            .iter()
            .find_map(|r| r.pair_channel.clone())
            .ok_or_else(|| Error::TaskConfig(format!("record `{id}` names no generation pair channel")))?;
        let target = group
            .iter()
            .find(|r| r.channel_names[0] == pair)
            .ok_or_else(|| Error::TaskConfig(format!("record `{id}` lacks pair channel `{pair}`")))?;
        for r in group.iter().filter(|r| r.channel_names[0] != pair) {
            out.push(((*r).clone(), (*target).clone()));
        }
    }
    Ok(out)
}

/// Sorts windows into the canonical (record, channel, start) order.
pub fn sort_canonical(windows: &mut [Window]) {
    windows.sort_by(|a, b| a.provenance.cmp(&b.provenance));
}

/// Drops classes below `floor(min_fraction · total)` windows, then
/// downsamples every surviving class to the smallest surviving count.
/// Surviving windows keep their relative order.
pub fn rebalance(windows: &[Window], min_fraction: f64, seed: u64) -> Result<Vec<Window>> {
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, w) in windows.iter().enumerate() {
        let c = w
            .class()
            .ok_or_else(|| Error::TaskConfig("rebalance needs classification windows".into()))?;
        by_class.entry(c).or_default().push(i);
    }
    let floor = (min_fraction * windows.len() as f64).floor() as usize;
    by_class.retain(|_, idx| idx.len() >= floor);
    if by_class.len() < 2 {
        return Err(Error::Degenerate(format!(
            "{} class(es) left after removing those under {floor} windows",
            by_class.len()
        )));
    }
    let target = by_class.values().map(Vec::len).min().expect("two classes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; windows.len()];
    for idx in by_class.values() {
        for &i in idx.choose_multiple(&mut rng, target) {
            keep[i] = true;
        }
    }
    Ok(windows
        .iter()
        .zip(keep)
        .filter_map(|(w, k)| k.then(|| w.clone()))
        .collect())
}

/// Window count per class.
pub fn class_counts(windows: &[Window]) -> HashMap<u32, usize> {
    let mut m = HashMap::new();
    for c in windows.iter().filter_map(Window::class) {
        *m.entry(c).or_insert(0) += 1;
    }
    m
}
