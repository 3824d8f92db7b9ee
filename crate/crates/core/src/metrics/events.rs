//! Event detection post-processing: peak picking and tolerance matching.

use serde::{Deserialize, Serialize};

/// Matching tolerance at 100 Hz (±70 ms).
pub const DEFAULT_TOLERANCE: usize = 7;

/// Peak-picking and matching parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventConfig {
    pub threshold: f64,
    /// Accepted peaks are at least this many samples apart.
    pub min_distance: usize,
    pub tolerance: usize,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            min_distance: 20,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

/// Greedy non-maximum suppression.
///
/// Candidates at or above `threshold` are visited in descending probability
/// (ties by lower index); a candidate closer than `min_distance` samples to an
/// accepted peak is dropped. Output is sorted ascending.
pub fn nms_peaks(probs: &[f64], threshold: f64, min_distance: usize) -> Vec<usize> {
    let mut cand: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] >= threshold).collect();
    cand.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in cand {
        if kept.iter().all(|&j| i.abs_diff(j) >= min_distance) {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

/// One-to-one pairing of predicted and annotated events.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventMatch {
    /// `(prediction index, annotation index)` into the input lists.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_truths: Vec<usize>,
    pub tolerance: usize,
}

impl EventMatch {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }

    pub fn fp(&self) -> usize {
        self.unmatched_preds.len()
    }

    pub fn fn_(&self) -> usize {
        self.unmatched_truths.len()
    }
}

/// Matches predictions to annotations within `tolerance` samples.
///
/// Pairs are first taken greedily in ascending distance (ties by prediction
/// then annotation position). Augmenting paths then extend the pairing to a
/// maximum one, so no arrangement of the same events yields more true
/// positives. On events spaced more than twice the tolerance apart the
/// augmentation never fires.
pub fn match_events(preds: &[usize], truths: &[usize], tolerance: usize) -> EventMatch {
    let adj: Vec<Vec<usize>> = preds
        .iter()
        .map(|&p| {
            (0..truths.len())
                .filter(|&t| p.abs_diff(truths[t]) <= tolerance)
                .collect()
        })
        .collect();
    let mut edges: Vec<(usize, usize, usize)> = Vec::new();
    for (p, ts) in adj.iter().enumerate() {
        for &t in ts {
            edges.push((preds[p].abs_diff(truths[t]), p, t));
        }
    }
    edges.sort_unstable();
    let mut pred_of: Vec<Option<usize>> = vec![None; truths.len()];
    let mut truth_of: Vec<Option<usize>> = vec![None; preds.len()];
    for (_, p, t) in edges {
        if truth_of[p].is_none() && pred_of[t].is_none() {
            truth_of[p] = Some(t);
            pred_of[t] = Some(p);
        }
    }
    for p in 0..preds.len() {
        if truth_of[p].is_none() {
            let mut seen = vec![false; truths.len()];
            augment(p, &adj, &mut seen, &mut pred_of, &mut truth_of);
        }
    }
    let mut pairs: Vec<(usize, usize)> = truth_of
        .iter()
        .enumerate()
        .filter_map(|(p, t)| t.map(|t| (p, t)))
        .collect();
    pairs.sort_unstable();
    EventMatch {
        pairs,
        unmatched_preds: (0..preds.len()).filter(|&p| truth_of[p].is_none()).collect(),
        unmatched_truths: (0..truths.len()).filter(|&t| pred_of[t].is_none()).collect(),
        tolerance,
    }
}

fn augment(
    p: usize,
    adj: &[Vec<usize>],
    seen: &mut [bool],
    pred_of: &mut [Option<usize>],
    truth_of: &mut [Option<usize>],
) -> bool {
    for &t in &adj[p] {
        if seen[t] {
            continue;
        }
        seen[t] = true;
        let free = match pred_of[t] {
            None => true,
            Some(q) => augment(q, adj, seen, pred_of, truth_of),
        };
        if free {
            pred_of[t] = Some(p);
            truth_of[p] = Some(t);
            return true;
        }
    }
    false
}

/// F1 from counts; 0 when there are no true positives.
pub fn f1_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn f1(m: &EventMatch) -> f64 {
    f1_counts(m.tp(), m.fp(), m.fn_())
}

/// Centres of the runs of set marks, one event per run.
pub fn mark_events(marks: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < marks.len() {
        if marks[i] > 0.5 {
            let start = i;
            while i < marks.len() && marks[i] > 0.5 {
                i += 1;
            }
            out.push((start + i - 1) / 2);
        } else {
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spikes(at: &[(usize, f64)]) -> Vec<f64> {
        let mut p = vec![0.0; 500];
        for &(i, v) in at {
            p[i] = v;
        }
        p
    }

    #[test]
    fn nms_examples() {
        assert_eq!(nms_peaks(&spikes(&[(100, 0.9)]), 0.5, 20), vec![100]);
        assert_eq!(nms_peaks(&spikes(&[(100, 0.9), (103, 0.8)]), 0.5, 10), vec![100]);
        assert_eq!(nms_peaks(&spikes(&[(100, 0.9), (200, 0.8)]), 0.5, 20), vec![100, 200]);
        assert!(nms_peaks(&spikes(&[(100, 0.4)]), 0.5, 20).is_empty());
    }

    #[test]
    fn nms_ties_prefer_lower_index() {
        assert_eq!(nms_peaks(&spikes(&[(105, 0.7), (100, 0.7)]), 0.5, 20), vec![100]);
    }

    #[test]
    fn match_examples() {
        let m = match_events(&[100, 205, 400], &[100, 210, 500], 7);
        assert_eq!((m.tp(), m.fp(), m.fn_()), (2, 1, 1));
        assert!((f1(&m) - 2.0 / 3.0).abs() < 1e-15);
        let m = match_events(&[10, 50, 90], &[10, 50, 90], 7);
        assert_eq!(m.tp(), 3);
        assert_eq!(f1(&m), 1.0);
        let m = match_events(&[108], &[100], 7);
        assert_eq!(m.tp(), 0);
        assert_eq!(f1(&m), 0.0);
    }

    #[test]
    fn augmentation_recovers_crossed_pairs() {
        // Greedy alone pairs 10–10 and strands both 3 and 17.
        let m = match_events(&[3, 10], &[10, 17], 7);
        assert_eq!(m.tp(), 2);
        assert!(m
            .pairs
            .iter()
            .all(|&(p, t)| [3usize, 10][p].abs_diff([10usize, 17][t]) <= 7));
    }

    #[test]
    fn f1_arithmetic() {
        assert!((f1_counts(2, 1, 1) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_counts(0, 3, 3), 0.0);
    }

    #[test]
    fn run_centres() {
        let mut m = vec![0.0; 20];
        for i in [4, 5, 6, 0, 1, 19] {
            m[i] = 1.0;
        }
        assert_eq!(mark_events(&m), vec![0, 5, 19]);
    }
}
