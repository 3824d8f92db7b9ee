use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Record-level train/test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub seed: u64,
    /// Train share; the train count is rounded down.
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            train_fraction: 0.5,
        }
    }
}

/// Splits record ids: the distinct ids are sorted, shuffled with the seed,
/// and the first `floor(n · train_fraction)` go to train.
pub fn split_ids<'a, I>(ids: I, spec: &SplitSpec) -> Result<(Vec<String>, Vec<String>)>
where
    I: IntoIterator<Item = &'a str>,
{
    let unique: BTreeSet<&str> = ids.into_iter().collect();
    if unique.len() < 2 {
        return Err(Error::Degenerate(format!(
            "need at least 2 records to split, got {}",
            unique.len()
        )));
    }
    if !(0.0..=1.0).contains(&spec.train_fraction) {
        return Err(Error::Config(format!(
            "train fraction {} outside [0, 1]",
            spec.train_fraction
        )));
    }
    let mut ids: Vec<String> = unique.into_iter().map(str::to_string).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    ids.shuffle(&mut rng);
    let n_train = (ids.len() as f64 * spec.train_fraction + 1e-9).floor() as usize;
    let test = ids.split_off(n_train);
    Ok((ids, test))
}

/// Splits items grouped by `key`, so every item of one group lands in the
/// same side. Item order is preserved within each side.
pub fn split_by<T: Clone, F>(items: &[T], key: F, spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>)>
where
    F: Fn(&T) -> &str,
{
    let (train_ids, _) = split_ids(items.iter().map(&key), spec)?;
    let train_set: BTreeSet<&str> = train_ids.iter().map(String::as_str).collect();
    let (train, test): (Vec<&T>, Vec<&T>) = items.iter().partition(|t| train_set.contains(key(t)));
    Ok((
        train.into_iter().cloned().collect(),
        test.into_iter().cloned().collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("r{i:02}")).collect()
    }

    #[test]
    fn halves_with_floor() {
        let spec = SplitSpec {
            seed: 3,
            ..Default::default()
        };
        let v = ids(10);
        let (a, b) = split_ids(v.iter().map(String::as_str), &spec).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
        let v = ids(3);
        let (a, b) = split_ids(v.iter().map(String::as_str), &spec).unwrap();
        assert_eq!((a.len(), b.len()), (1, 2));
    }

    #[test]
    fn deterministic() {
        let spec = SplitSpec {
            seed: 11,
            ..Default::default()
        };
        let v = ids(20);
        let first = split_ids(v.iter().map(String::as_str), &spec).unwrap();
        let mut rev = v.clone();
        rev.reverse();
        let second = split_ids(rev.iter().map(String::as_str), &spec).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn single_record_is_degenerate() {
        assert!(split_ids(["a"], &SplitSpec::default()).is_err());
    }
}
