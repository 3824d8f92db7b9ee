//! Record pipeline: synthesis, preprocessing, windowing and splitting.

use std::collections::BTreeSet;

use ecgbench_core::signal::synth::{synth_ecg, synth_paired, SynthParams};
use ecgbench_core::signal::window::generation_pairs;
use ecgbench_core::signal::{
    impute_and_filter, load_record, resample_100hz, save_record, split_channels, split_ids, windowize, Payload, Record,
    SplitSpec, WINDOW_LEN,
};
use ecgbench_core::TaskKind;
use proptest::prelude::*;

fn quiet(bpm: f64, seed: u64) -> SynthParams {
    SynthParams {
        heart_rate_bpm: bpm,
        hr_jitter_fraction: 0.0,
        noise_std: 0.0,
        wander_amplitude: 0.0,
        seed,
        ..Default::default()
    }
}

#[test]
fn autocorrelation_peaks_at_the_beat_period() {
    let r = synth_ecg("a", &quiet(60.0, 1), 10.0).unwrap();
    let x = &r.channels[0];
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let ac = |lag: usize| -> f64 { (0..x.len() - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum() };
    let best = (50..150).max_by(|&a, &b| ac(a).total_cmp(&ac(b))).unwrap();
    assert!(best.abs_diff(100) <= 1, "peak at lag {best}");
}

#[test]
fn beat_count_matches_duration() {
    for (bpm, dur, seed) in [(60.0, 10.0, 2), (72.0, 30.0, 3), (120.0, 17.0, 4), (45.0, 60.0, 5)] {
        let r = synth_ecg(
            "b",
            &SynthParams {
                heart_rate_bpm: bpm,
                seed,
                ..Default::default()
            },
            dur,
        )
        .unwrap();
        let expected = (dur * bpm / 60.0).floor() as i64;
        let got = r.annotations.len() as i64;
        assert!(
            (got - expected).abs() <= 1,
            "{bpm} bpm over {dur} s: {got} beats, expected {expected}"
        );
    }
}

#[test]
fn pipeline_stages_compose() {
    let dir = tempfile::tempdir().unwrap();
    let mut params = SynthParams {
        seed: 6,
        sampling_rate: 250.0,
        ..Default::default()
    };
    params.noise_std = 0.02;
    let mut r = synth_paired("pair", &params, 12.0).unwrap();
    r.masks[0][100] = false;
    r.channels[0][100] = f64::NAN;
    let base = save_record(&r, dir.path()).unwrap();
    let loaded = load_record(&base.with_extension("manifest")).unwrap();
    assert_eq!(loaded.missing_count(), 1);
    let resampled = resample_100hz(&loaded).unwrap();
    assert_eq!(resampled.sampling_rate, 100.0);
    let clean = impute_and_filter(&resampled).expect("record passes the filter");
    assert_eq!(clean.missing_count(), 0);
    let channels = split_channels(&clean);
    assert_eq!(channels.len(), 2);
    let pairs = generation_pairs(&channels).unwrap();
    assert_eq!(pairs.len(), 1);
    let (input, target) = &pairs[0];
    let windows = windowize(input, Some(TaskKind::Generation), 250, Some(target)).unwrap();
    assert_eq!(windows.len(), (1200 - WINDOW_LEN) / 250 + 1);
    for w in &windows {
        let start = w.provenance.start;
        assert_eq!(w.provenance.record_id, "pair");
        assert_eq!(w.signal, input.channels[0][start..start + WINDOW_LEN]);
        let Payload::Target(t) = &w.payload else {
            panic!("generation payload")
        };
        assert_eq!(t[..], target.channels[0][start..start + WINDOW_LEN]);
    }
}

#[test]
fn twelve_channels_split_twelve_ways() {
    let chans: Vec<Vec<f64>> = (0..12).map(|c| vec![c as f64; 50]).collect();
    let names: Vec<String> = (0..12).map(|c| format!("lead{c}")).collect();
    let r = Record::new("multi", 100.0, names, chans).unwrap();
    let split = split_channels(&r);
    assert_eq!(split.len(), 12);
    assert!(split
        .iter()
        .enumerate()
        .all(|(c, s)| s.channels[0][0] == c as f64 && s.n_channels() == 1));
}

proptest! {
    #[test]
    fn split_is_a_partition(n in 2usize..40, seed in 0u64..1000) {
        let ids: Vec<String> = (0..n).map(|i| format!("r{i:02}")).collect();
        let spec = SplitSpec { seed, ..Default::default() };
        let (train, test) = split_ids(ids.iter().map(String::as_str), &spec).unwrap();
        prop_assert_eq!(train.len(), n / 2);
        let a: BTreeSet<_> = train.iter().collect();
        let b: BTreeSet<_> = test.iter().collect();
        prop_assert!(a.is_disjoint(&b));
        prop_assert_eq!(a.len() + b.len(), n);
        prop_assert_eq!(split_ids(ids.iter().map(String::as_str), &spec).unwrap(), (train, test));
    }

    #[test]
    fn windows_reconstruct_their_source(len in 400usize..1500, stride in 1usize..400, seed in 0u64..100) {
        let r = synth_ecg("p", &SynthParams { seed, ..Default::default() }, len as f64 / 100.0).unwrap();
        let ws = windowize(&r, Some(TaskKind::Detection), stride, None).unwrap();
        let n = r.len();
        let expected = if n < WINDOW_LEN { 0 } else { (n - WINDOW_LEN) / stride + 1 };
        prop_assert_eq!(ws.len(), expected);
        for w in &ws {
            let s = w.provenance.start;
            prop_assert_eq!(&w.signal[..], &r.channels[0][s..s + WINDOW_LEN]);
        }
    }

    #[test]
    fn jitter_free_gaps_are_constant(bpm in 40.0f64..180.0, seed in 0u64..50) {
        let r = synth_ecg("j", &quiet(bpm, seed), 20.0).unwrap();
        let want = (6000.0 / bpm).round() as usize;
        for w in r.annotations.windows(2) {
            prop_assert_eq!(w[1].index - w[0].index, want);
        }
    }

    #[test]
    fn resampling_100hz_is_identity(seed in 0u64..100) {
        let r = synth_ecg("i", &SynthParams { seed, ..Default::default() }, 3.0).unwrap();
        let s = resample_100hz(&r).unwrap();
        prop_assert_eq!(&s.channels, &r.channels);
        prop_assert_eq!(&s.annotations, &r.annotations);
    }
}
