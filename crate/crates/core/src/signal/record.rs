use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fiducial wave an annotation points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WaveLabel {
    P,
    Q,
    R,
    S,
    T,
}

impl FromStr for WaveLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim() {
            "P" => WaveLabel::P,
            "Q" => WaveLabel::Q,
            "R" => WaveLabel::R,
            "S" => WaveLabel::S,
            "T" => WaveLabel::T,
            other => return Err(format!("unknown wave label `{other}`")),
        })
    }
}

impl fmt::Display for WaveLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WaveLabel::P => "P",
            WaveLabel::Q => "Q",
            WaveLabel::R => "R",
            WaveLabel::S => "S",
            WaveLabel::T => "T",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Annotation {
    pub index: usize,
    pub label: WaveLabel,
}

impl Annotation {
    pub fn new(index: usize, label: WaveLabel) -> Self {
        Self { index, label }
    }
}

impl fmt::Display for Annotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.label, self.index)
    }
}

impl FromStr for Annotation {
    type Err = String;

    /// Parses the `LABEL@INDEX` form used in manifests, e.g. `R@37`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (label, index) = s
            .split_once('@')
            .ok_or_else(|| format!("annotation `{s}` is not of the form LABEL@INDEX"))?;
        let index = index
            .trim()
            .parse()
            .map_err(|_| format!("annotation `{s}` has a bad index"))?;
        Ok(Self {
            index,
            label: label.parse()?,
        })
    }
}

/// Origin of a single-channel record produced by channel splitting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceRef {
    pub record_id: String,
    pub channel: usize,
}

/// A multi-channel ECG recording.
///
/// Missing samples are marked `false` in the per-channel validity mask and
/// stored as `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub sampling_rate: f64,
    pub channel_names: Vec<String>,
    pub channels: Vec<Vec<f64>>,
    pub masks: Vec<Vec<bool>>,
    pub annotations: Vec<Annotation>,
    pub class_label: Option<u32>,
    /// Name of the channel that serves as the generation target.
    pub pair_channel: Option<String>,
    pub source: Option<SourceRef>,
}

impl Record {
    /// Builds a fully valid record and checks its invariants.
    pub fn new(
        id: impl Into<String>,
        sampling_rate: f64,
        channel_names: Vec<String>,
        channels: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let masks = channels.iter().map(|c| vec![true; c.len()]).collect();
        let r = Self {
            id: id.into(),
            sampling_rate,
            channel_names,
            channels,
            masks,
            annotations: Vec::new(),
            class_label: None,
            pair_channel: None,
            source: None,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|n| n == name)
    }

    pub fn missing_count(&self) -> usize {
        self.masks.iter().flatten().filter(|v| !**v).count()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidRecord(format!("{}: {m}", self.id)));
        if !(self.sampling_rate > 0.0 && self.sampling_rate.is_finite()) {
            return bad(format!("sampling rate {} must be positive", self.sampling_rate));
        }
        if self.channels.is_empty() {
            return bad("no channels".into());
        }
        if self.channel_names.len() != self.channels.len() {
            return bad("channel name count differs from channel count".into());
        }
        if self.masks.len() != self.channels.len() {
            return bad("mask count differs from channel count".into());
        }
        let n = self.len();
        for (c, (ch, m)) in self.channels.iter().zip(&self.masks).enumerate() {
            if ch.len() != n || m.len() != n {
                return bad(format!(
                    "channel {c} has length {} (mask {}), expected {n}",
                    ch.len(),
                    m.len()
                ));
            }
        }
        if let Some(a) = self.annotations.iter().find(|a| a.index >= n) {
            return bad(format!("annotation {a} outside [0, {n})"));
        }
        if let Some(p) = &self.pair_channel {
            if self.channel_index(p).is_none() && self.source.is_none() {
                return bad(format!("pair channel `{p}` not present"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annotation_text_form() {
        let a: Annotation = "R@37".parse().unwrap();
        assert_eq!(a, Annotation::new(37, WaveLabel::R));
        assert_eq!(a.to_string(), "R@37");
        assert!("X@3".parse::<Annotation>().is_err());
        assert!("R37".parse::<Annotation>().is_err());
    }

    #[test]
    fn invariants_enforced() {
        assert!(Record::new("a", 0.0, vec!["x".into()], vec![vec![1.0]]).is_err());
        assert!(Record::new(
            "a",
            100.0,
            vec!["x".into(), "y".into()],
            vec![vec![1.0], vec![1.0, 2.0]]
        )
        .is_err());
        let mut r = Record::new("a", 100.0, vec!["x".into()], vec![vec![1.0, 2.0]]).unwrap();
        r.annotations.push(Annotation::new(2, WaveLabel::R));
        assert!(r.validate().is_err());
    }
}
