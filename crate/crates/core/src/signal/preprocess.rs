//! Resampling, gap filling, quality filtering and channel splitting.

use std::fmt;

use super::record::{Annotation, Record, SourceRef};
use crate::{Error, Result};

pub const TARGET_RATE: f64 = 100.0;
/// Channels with more than this fraction of missing samples are discarded.
pub const MAX_MISSING_FRACTION: f64 = 0.25;
/// Span, in seconds, scanned by the flatline test.
pub const FLATLINE_SPAN_S: f64 = 2.0;
/// A span is flat when its standard deviation is below this fraction of the
/// channel's global range.
pub const FLATLINE_REL_STD: f64 = 1e-6;

/// Linear interpolation onto a 100 Hz grid starting at the first sample.
pub fn resample_100hz(r: &Record) -> Result<Record> {
    let n = r.len();
    if n < 2 {
        return Err(Error::TooShort {
            id: r.id.clone(),
            len: n,
        });
    }
    if r.sampling_rate == TARGET_RATE {
        return Ok(r.clone());
    }
    let ratio = r.sampling_rate / TARGET_RATE;
    let m = ((n - 1) as f64 / ratio + 1e-9).floor() as usize + 1;
    let mut channels = Vec::with_capacity(r.n_channels());
    let mut masks = Vec::with_capacity(r.n_channels());
    for (ch, mask) in r.channels.iter().zip(&r.masks) {
        let mut out = Vec::with_capacity(m);
        let mut out_mask = Vec::with_capacity(m);
        for j in 0..m {
            let pos = j as f64 * ratio;
            let i0 = (pos.floor() as usize).min(n - 1);
            let frac = pos - i0 as f64;
            if frac < 1e-9 || i0 + 1 >= n {
                out.push(ch[i0]);
                out_mask.push(mask[i0]);
            } else {
                out.push(ch[i0] * (1.0 - frac) + ch[i0 + 1] * frac);
                out_mask.push(mask[i0] && mask[i0 + 1]);
            }
        }
        channels.push(out);
        masks.push(out_mask);
    }
    let annotations = r
        .annotations
        .iter()
        .map(|a| {
            let idx = (a.index as f64 / ratio).round_ties_even().max(0.0) as usize;
            Annotation::new(idx.min(m - 1), a.label)
        })
        .collect();
    let out = Record {
        sampling_rate: TARGET_RATE,
        channels,
        masks,
        annotations,
        ..r.clone()
    };
    out.validate()?;
    Ok(out)
}

/// Why a record was dropped by [`impute_and_filter`].
#[derive(Debug, Clone, PartialEq)]
pub enum Discard {
    Missing { channel: String, fraction: f64 },
    Flatline { channel: String, start: usize },
}

impl Discard {
    /// Short machine-readable tag.
    pub fn tag(&self) -> &'static str {
        match self {
            Discard::Missing { .. } => "missing>25%",
            Discard::Flatline { .. } => "flatline",
        }
    }
}

impl fmt::Display for Discard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Discard::Missing { channel, fraction } => {
                write!(f, "missing>25% (channel {channel}: {:.1}% missing)", fraction * 100.0)
            }
            Discard::Flatline { channel, start } => write!(f, "flatline (channel {channel} at sample {start})"),
        }
    }
}

/// Fills gaps and applies the quality filter, reporting the discard reason.
pub fn impute_checked(r: &Record) -> std::result::Result<Record, Discard> {
    let n = r.len();
    for (name, mask) in r.channel_names.iter().zip(&r.masks) {
        let missing = mask.iter().filter(|v| !**v).count();
        let fraction = if n == 0 { 1.0 } else { missing as f64 / n as f64 };
        if fraction > MAX_MISSING_FRACTION {
            return Err(Discard::Missing {
                channel: name.clone(),
                fraction,
            });
        }
    }
    let mut out = r.clone();
    for (ch, mask) in out.channels.iter_mut().zip(out.masks.iter_mut()) {
        fill_gaps(ch, mask);
        mask.iter_mut().for_each(|m| *m = true);
    }
    let span = ((FLATLINE_SPAN_S * r.sampling_rate).round() as usize).max(2);
    for (name, ch) in out.channel_names.iter().zip(&out.channels) {
        if let Some(start) = flatline_start(ch, span) {
            return Err(Discard::Flatline {
                channel: name.clone(),
                start,
            });
        }
    }
    Ok(out)
}

/// [`impute_checked`] without the reason.
pub fn impute_and_filter(r: &Record) -> Option<Record> {
    impute_checked(r).ok()
}

/// Linear interpolation between nearest valid neighbours; edge gaps take the
/// nearest valid value.
fn fill_gaps(ch: &mut [f64], mask: &[bool]) {
    let valid: Vec<usize> = (0..ch.len()).filter(|&i| mask[i]).collect();
    let (Some(&first), Some(&last)) = (valid.first(), valid.last()) else {
        return;
    };
    let (head, tail) = (ch[first], ch[last]);
    ch[..first].fill(head);
    ch[last + 1..].fill(tail);
    for pair in valid.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b > a + 1 {
            let (va, vb) = (ch[a], ch[b]);
            for i in a + 1..b {
                let t = (i - a) as f64 / (b - a) as f64;
                ch[i] = va + (vb - va) * t;
            }
        }
    }
}

/// Start of the first `span`-sample window whose standard deviation is below
/// the flatline threshold, if any.
fn flatline_start(ch: &[f64], span: usize) -> Option<usize> {
    if ch.is_empty() {
        return Some(0);
    }
    let (lo, hi) = ch.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let range = hi - lo;
    if range == 0.0 {
        return Some(0);
    }
    let span = span.min(ch.len());
    let threshold = FLATLINE_REL_STD * range;
    // Centre on the midrange so the running sums stay well conditioned.
    let c = 0.5 * (lo + hi);
    let (mut s1, mut s2) = (0.0, 0.0);
    for &v in &ch[..span] {
        s1 += v - c;
        s2 += (v - c) * (v - c);
    }
    let nf = span as f64;
    for start in 0..=ch.len() - span {
        if start > 0 {
            let out = ch[start - 1] - c;
            let inn = ch[start + span - 1] - c;
            s1 += inn - out;
            s2 += inn * inn - out * out;
        }
        let var = (s2 / nf - (s1 / nf).powi(2)).max(0.0);
        if var.sqrt() < threshold {
            // Confirm with an exact two-pass estimate; the running sums drift.
            let w = &ch[start..start + span];
            let mean = w.iter().sum::<f64>() / nf;
            let exact = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf).sqrt();
            if exact < threshold {
                return Some(start);
            }
        }
    }
    None
}

/// One single-channel record per channel, with id suffix `_ch<c>`.
pub fn split_channels(r: &Record) -> Vec<Record> {
    (0..r.n_channels())
        .map(|c| Record {
            id: format!("{}_ch{c}", r.id),
            sampling_rate: r.sampling_rate,
            channel_names: vec![r.channel_names[c].clone()],
            channels: vec![r.channels[c].clone()],
            masks: vec![r.masks[c].clone()],
            annotations: r.annotations.clone(),
            class_label: r.class_label,
            pair_channel: r.pair_channel.clone(),
            source: Some(SourceRef {
                record_id: r.id.clone(),
                channel: c,
            }),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::record::WaveLabel;

    fn rec(fs: f64, xs: Vec<f64>) -> Record {
        Record::new("r", fs, vec!["I".into()], vec![xs]).unwrap()
    }

    #[test]
    fn decimate_200hz() {
        let r = resample_100hz(&rec(200.0, vec![0.0, 1.0, 2.0, 3.0])).unwrap();
        assert_eq!(r.channels[0], vec![0.0, 2.0]);
    }

    #[test]
    fn upsample_50hz() {
        let r = resample_100hz(&rec(50.0, vec![0.0, 1.0])).unwrap();
        assert_eq!(r.channels[0], vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn identity_at_100hz() {
        let mut r = rec(100.0, vec![3.0, 1.0, 4.0]);
        r.annotations.push(Annotation::new(1, WaveLabel::R));
        assert_eq!(resample_100hz(&r).unwrap(), r);
    }

    #[test]
    fn too_short() {
        assert!(matches!(
            resample_100hz(&rec(100.0, vec![1.0])),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn annotation_rounding_ties_even() {
        let mut r = rec(200.0, (0..20).map(f64::from).collect());
        r.annotations = vec![Annotation::new(5, WaveLabel::R), Annotation::new(7, WaveLabel::R)];
        let out = resample_100hz(&r).unwrap();
        // 2.5 -> 2, 3.5 -> 4
        assert_eq!(out.annotations[0].index, 2);
        assert_eq!(out.annotations[1].index, 4);
    }

    #[test]
    fn mask_invalid_if_either_bracket_invalid() {
        let mut r = rec(50.0, vec![0.0, 1.0, 2.0]);
        r.masks[0][1] = false;
        let out = resample_100hz(&r).unwrap();
        assert_eq!(out.masks[0], vec![true, false, false, false, true]);
    }

    #[test]
    fn midpoint_fill() {
        let mut r = rec(100.0, vec![1.0, 0.0, 3.0, 2.0, 5.0, 1.0, 2.0, 0.5]);
        r.masks[0][1] = false;
        let out = impute_and_filter(&r).unwrap();
        assert_eq!(&out.channels[0][..3], &[1.0, 2.0, 3.0]);
        assert!(out.masks[0].iter().all(|m| *m));
    }

    #[test]
    fn edge_gaps_extend() {
        let mut ch = vec![0.0, 0.0, 2.0, 4.0, 0.0];
        fill_gaps(&mut ch, &[false, false, true, true, false]);
        assert_eq!(ch, vec![2.0, 2.0, 2.0, 4.0, 4.0]);
    }

    #[test]
    fn missing_threshold() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut r = rec(100.0, xs);
        for i in 0..26 {
            r.masks[0][i * 3] = false;
        }
        assert_eq!(impute_checked(&r).unwrap_err().tag(), "missing>25%");
        r.masks[0][75] = true;
        assert!(impute_and_filter(&r).is_some());
    }

    #[test]
    fn clean_record_unchanged() {
        let r = rec(100.0, (0..300).map(|i| (i as f64 * 0.1).sin()).collect());
        assert_eq!(impute_and_filter(&r).unwrap(), r);
    }

    #[test]
    fn flatline_detected() {
        let mut xs: Vec<f64> = (0..600).map(|i| (i as f64 * 0.1).sin()).collect();
        for v in &mut xs[300..520] {
            *v = 0.25;
        }
        assert_eq!(impute_checked(&rec(100.0, xs)).unwrap_err().tag(), "flatline");
    }

    #[test]
    fn split_preserves_content() {
        let mut r = Record::new(
            "x",
            100.0,
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
        )
        .unwrap();
        r.annotations.push(Annotation::new(1, WaveLabel::R));
        r.class_label = Some(1);
        let parts = split_channels(&r);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[1].id, "x_ch1");
        assert_eq!(parts[1].channels[0], vec![3.0, 4.0]);
        assert_eq!(parts[0].annotations, r.annotations);
        assert_eq!(parts[0].class_label, Some(1));
    }
}
