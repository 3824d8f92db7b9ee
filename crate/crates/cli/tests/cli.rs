//! End-to-end behaviour of the benchmark commands.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use clap::Parser;
use ecgbench::commands::{self, Prepared};
use ecgbench::{exit, Cli, Overrides, Preset, RunConfig};
use ecgbench_autodiff::checkpoint;
use ecgbench_core::signal::{list_records, load_record, save_record};
use proptest::prelude::*;

fn run(dir: &Path, body: &str, verb: &str, out: &str) -> ecgbench::Result<String> {
    let cfg = dir.join("run.cfg.toml");
    fs::write(&cfg, with_data(dir, body)).unwrap();
    let out = dir.join(out);
    let args = [
        "ecgbench",
        verb,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    ecgbench::run(&Cli::parse_from(args))
}

/// Points the data section at `dir/records` and `dir/prepared` unless the
/// body sets it.
fn with_data(dir: &Path, body: &str) -> String {
    let mut table: toml::Table = toml::from_str(body).unwrap();
    let data = table
        .entry("data")
        .or_insert_with(|| toml::Value::Table(Default::default()))
        .as_table_mut()
        .unwrap();
    for key in ["records", "prepared"] {
        data.entry(key)
            .or_insert_with(|| toml::Value::String(dir.join(key).to_str().unwrap().to_string()));
    }
    toml::to_string(&table).unwrap()
}

fn bin(cwd: &Path, args: &[&str]) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_ecgbench"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn files(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    v
}

// ---------------------------------------------------------------- config

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn config_round_trips(
        seed in 0..=i64::MAX as u64,
        epochs in 1usize..500,
        batch in 1usize..4096,
        lr in proptest::collection::vec(1e-7f64..1.0, 1..4),
        hidden in 1usize..64,
        full in any::<bool>(),
    ) {
        let mut c = RunConfig::for_preset(if full { Preset::Paper } else { Preset::Desk });
        c.seed = seed;
        c.train.epochs = epochs;
        c.train.batch_size = batch;
        c.train.lr_candidates = lr;
        c.model.pssm.hidden = hidden;
        let text = c.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        prop_assert_eq!(back.to_toml().unwrap(), text);
        prop_assert_eq!(back.fingerprint().unwrap(), c.fingerprint().unwrap());
    }
}

#[test]
fn preset_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "[synth]\ncount = 1\nduration_s = 12.0\n").unwrap();
    let out = tmp.path().join("recs");
    let args = [
        "ecgbench",
        "--preset",
        "paper",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "synth",
    ];
    ecgbench::run(&Cli::parse_from(args)).unwrap();
    let recorded = RunConfig::from_toml(&fs::read_to_string(out.join(commands::RUN_CONFIG)).unwrap()).unwrap();
    assert_eq!(recorded.preset, Preset::Paper);
    assert_eq!(recorded.pretrain.train.batch_size, 8192);
    assert_eq!(recorded.train.lr_candidates, [1e-4, 5e-5, 1e-5]);
    assert_eq!(recorded.synth.count, 1);
    let flags = Overrides {
        seed: Some(9),
        ..Default::default()
    };
    let c = RunConfig::load(Some(&cfg), &flags).unwrap();
    assert_eq!((c.seed, c.train.seed, c.pretrain.train.seed), (9, 9, 9));
}

// ---------------------------------------------------------------- synth / prep

#[test]
fn synth_is_seeded_and_paired() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "seed = 7\n[synth]\ncount = 20\nduration_s = 12.0\nmode = \"paired\"\n";
    for out in ["a", "b"] {
        run(tmp.path(), body, "synth", out).unwrap();
    }
    let (a, b) = (files(&tmp.path().join("a"), "sig"), files(&tmp.path().join("b"), "sig"));
    assert_eq!(a.len(), 20);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
    let r = load_record(&a[0]).unwrap();
    assert_eq!(r.n_channels(), 2);
    assert!(r.pair_channel.is_some());
    run(
        tmp.path(),
        "seed = 8\n[synth]\ncount = 20\nduration_s = 12.0\nmode = \"paired\"\n",
        "synth",
        "c",
    )
    .unwrap();
    assert_ne!(
        fs::read(&a[0]).unwrap(),
        fs::read(&files(&tmp.path().join("c"), "sig")[0]).unwrap()
    );
}

#[test]
fn prep_splits_by_record_and_logs_discards() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "seed = 3\ntask = \"detection\"\n[synth]\ncount = 10\nduration_s = 12.0\n";
    run(tmp.path(), body, "synth", "records").unwrap();
    let m = commands::prep(
        &RunConfig::load(
            Some(&tmp.path().join("run.cfg.toml")),
            &Overrides {
                out: Some(tmp.path().join("prepared")),
                ..Default::default()
            },
        )
        .unwrap(),
    )
    .unwrap();
    assert_eq!((m.train_ids.len(), m.test_ids.len()), (5, 5));
    assert!(m.train_ids.iter().all(|id| !m.test_ids.contains(id)));
    assert!(m.discarded.is_empty());
    let first = fs::read(tmp.path().join("prepared").join(commands::SPLIT_MANIFEST)).unwrap();
    run(tmp.path(), body, "prep", "prepared").unwrap();
    assert_eq!(
        fs::read(tmp.path().join("prepared").join(commands::SPLIT_MANIFEST)).unwrap(),
        first
    );
    let data = Prepared::open(&tmp.path().join("prepared")).unwrap();
    let train = data.train().unwrap();
    assert_eq!(train.len(), m.train_windows);
    assert!(train.iter().all(|w| m.train_ids.contains(&w.provenance.record_id)));

    // A record with 30% of its samples missing is dropped and logged.
    let path = &list_records(&tmp.path().join("records")).unwrap()[0];
    let mut r = load_record(path).unwrap();
    let n = r.len();
    for i in 0..n * 3 / 10 {
        r.masks[0][i] = false;
        r.channels[0][i] = 0.0;
    }
    save_record(&r, &tmp.path().join("records")).unwrap();
    run(tmp.path(), body, "prep", "prepared2").unwrap();
    let log = fs::read_to_string(tmp.path().join("prepared2").join(commands::DISCARD_LOG)).unwrap();
    assert!(log.contains(&r.id) && log.contains("missing>25%"), "{log}");
}

#[test]
fn prep_without_records_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir(tmp.path().join("records")).unwrap();
    let err = run(tmp.path(), "", "prep", "prepared").unwrap_err();
    assert_eq!(err.exit_code(), exit::DATA);
}

// ---------------------------------------------------------------- training

const TINY_PRETRAIN: &str = r#"
seed = 4
task = "detection"
[synth]
count = 4
duration_s = 12.0
[data]
train_fraction = 1.0
[model]
kind = "transformer"
[model.transformer]
hidden = 8
heads = 2
layers = 1
[pretrain.train]
epochs = 2
batch_size = 8
lr_candidates = [3e-3]
"#;

#[test]
fn pretrain_lowers_loss_and_resumes() {
    let tmp = tempfile::tempdir().unwrap();
    run(tmp.path(), TINY_PRETRAIN, "synth", "records").unwrap();
    run(tmp.path(), TINY_PRETRAIN, "prep", "prepared").unwrap();
    run(tmp.path(), TINY_PRETRAIN, "pretrain", "pre").unwrap();
    let (_, m) = checkpoint::load(&tmp.path().join("pre/pretrain")).unwrap();
    let (initial, last) = (
        m.meta["initial_loss"].as_f64().unwrap(),
        m.meta["final_loss"].as_f64().unwrap(),
    );
    assert!(last < initial, "{initial} -> {last}");
    let steps = m.meta["step"].as_u64().unwrap();
    assert!(steps > 0);

    let resume = format!(
        "{TINY_PRETRAIN}\n[checkpoints]\nresume = {:?}\n",
        tmp.path().join("pre/pretrain").to_str().unwrap()
    );
    run(tmp.path(), &resume, "pretrain", "pre2").unwrap();
    let (_, m2) = checkpoint::load(&tmp.path().join("pre2/pretrain")).unwrap();
    assert_eq!(m2.meta["step"].as_u64().unwrap(), 2 * steps);
    assert_eq!(m2.meta["epochs_done"].as_u64().unwrap(), 4);
    let log = fs::read_to_string(tmp.path().join("pre2").join(commands::PRETRAIN_LOG)).unwrap();
    assert_eq!(log.lines().count(), 4);
}

#[test]
fn generation_train_and_eval_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"
seed = 2
task = "generation"
[synth]
count = 4
duration_s = 12.0
mode = "paired"
[model.pssm]
hidden = 4
depth = 2
[train]
epochs = 2
batch_size = 8
lr_candidates = [3e-3]
"#;
    run(tmp.path(), body, "synth", "records").unwrap();
    run(tmp.path(), body, "prep", "prepared").unwrap();
    run(tmp.path(), body, "train", "run").unwrap();
    let report = commands::load_report(&tmp.path().join("run")).unwrap();
    assert!(report.metric("mse").is_some_and(f64::is_finite));
    assert!(report.metric("ffd").is_some_and(|v| v >= 0.0));
    let eval = format!(
        "{body}\n[checkpoints]\nmodel = {:?}\n",
        tmp.path().join("run/model").to_str().unwrap()
    );
    run(tmp.path(), &eval, "eval", "eval").unwrap();
    let again = commands::load_report(&tmp.path().join("eval")).unwrap();
    assert_eq!(again.metrics, report.metrics);
    let csv = fs::read_to_string(tmp.path().join("run").join(commands::REPORT_CSV)).unwrap();
    assert!(csv.contains("mse") && csv.contains("ffd"));
}

// ---------------------------------------------------------------- probe

/// Isolated Gaussian R pulses at 60 bpm: no other waves, jitter or noise.
const PULSES: &str = r#"
seed = 6
task = "detection"
[synth]
count = 3
duration_s = 12.0
[synth.params]
heart_rate_bpm = 60.0
hr_jitter_fraction = 0.0
noise_std = 0.0
wander_amplitude = 0.0
p = { offset_s = -0.2, amplitude = 0.0, width_s = 0.025 }
q = { offset_s = -0.03, amplitude = 0.0, width_s = 0.01 }
r = { offset_s = 0.0, amplitude = 1.0, width_s = 0.1 }
s = { offset_s = 0.03, amplitude = 0.0, width_s = 0.01 }
t = { offset_s = 0.3, amplitude = 0.0, width_s = 0.05 }
[data]
train_fraction = 1.0
[probe]
max_shift = 48
step = 4
"#;

#[test]
fn shift_probe_rows_and_monotone_mse() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(
        "{PULSES}\n[checkpoints]\nextractor = {:?}\n",
        tmp.path().join("pre/pretrain").to_str().unwrap()
    );
    run(tmp.path(), &body, "synth", "records").unwrap();
    run(tmp.path(), &body, "prep", "prepared").unwrap();
    // The probe needs a checkpoint; two epochs of a tiny transformer suffice.
    let pre = format!("{body}{}", &TINY_PRETRAIN[TINY_PRETRAIN.find("[model]").unwrap()..]);
    run(tmp.path(), &pre, "pretrain", "pre").unwrap();
    let err = run(tmp.path(), PULSES, "probe-shift", "none").unwrap_err();
    assert_eq!(err.exit_code(), exit::CONFIG);
    run(tmp.path(), &body, "probe-shift", "probe").unwrap();
    let mut rdr = csv::Reader::from_path(tmp.path().join("probe").join(commands::PROBE_CSV)).unwrap();
    let rows: Vec<(usize, f64, f64)> = rdr.deserialize().map(Result::unwrap).collect();
    let shifts: Vec<usize> = rows.iter().map(|r| r.0).collect();
    assert_eq!(shifts, (0..=48).step_by(4).collect::<Vec<_>>());
    assert_eq!(rows[0].1, 0.0);
    assert!(rows[0].2.abs() < 1e-9);
    for w in rows.windows(2) {
        assert!(w[1].1 >= w[0].1, "mse fell from shift {} to {}", w[0].0, w[1].0);
    }
    let md = fs::read_to_string(tmp.path().join("probe").join(commands::PROBE_TABLE)).unwrap();
    assert_eq!(md.lines().count(), 2 + rows.len());
}

// ---------------------------------------------------------------- report

fn write_report(dir: &Path, name: &str, task: &str, dataset: &str, model: &str, metric: &str, v: f64) -> PathBuf {
    let text = serde_json::json!({
        "task": task, "dataset": dataset, "model": model,
        "metrics": [{ "name": metric, "value": v }],
        "fingerprint": "", "seed": 0, "config": "",
    });
    let p = dir.join(format!("{name}.json"));
    fs::write(&p, text.to_string()).unwrap();
    p
}

#[test]
fn report_lays_out_datasets_by_models() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let inputs = [
        write_report(d, "1", "forecasting", "A", "pssm", "mse", 0.2),
        write_report(d, "2", "forecasting", "A", "transformer", "mse", 0.3),
        write_report(d, "3", "forecasting", "B", "pssm", "mse", 0.4),
    ];
    let mut args: Vec<String> = ["ecgbench", "--out", d.join("t").to_str().unwrap(), "report"]
        .map(String::from)
        .to_vec();
    args.extend(inputs.iter().map(|p| p.to_str().unwrap().to_string()));
    let md = ecgbench::run(&Cli::parse_from(&args)).unwrap();
    assert!(md.contains("| Dataset | pssm | transformer |"), "{md}");
    assert!(md.contains("| A | **0.200** | 0.300 |"), "{md}");
    assert!(md.contains("| B | **0.400** | — |"), "{md}");
    // (0.2 + 0.4) / 2 rounds just above 0.3, so the transformer column wins.
    assert!(md.contains("| Average | 0.300 | **0.300** |"), "{md}");
    let csv = fs::read_to_string(d.join("t").join(commands::TABLE_CSV)).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.contains("forecasting,mse,B,0.4,—"), "{csv}");

    args.push(
        write_report(d, "4", "detection", "A", "pssm", "f1", 0.9)
            .to_str()
            .unwrap()
            .to_string(),
    );
    let err = ecgbench::run(&Cli::parse_from(&args)).unwrap_err();
    assert_eq!(err.exit_code(), exit::CONFIG);
}

// ---------------------------------------------------------------- exit codes

#[test]
fn exit_codes_follow_the_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.toml"), "[train]\nepoch = 3\n").unwrap();
    let out = bin(d, &["--config", "bad.toml", "config"]);
    assert_eq!(out.status.code(), Some(exit::CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch"));

    let out = bin(d, &["--out", "p", "prep"]);
    assert_eq!(
        out.status.code(),
        Some(exit::DATA),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = bin(d, &["--threads", "0", "config"]);
    assert_eq!(out.status.code(), Some(exit::CONFIG));
    let out = bin(d, &["--seed", "18446744073709551615", "config"]);
    assert_eq!(out.status.code(), Some(exit::CONFIG));

    let body = r#"
task = "forecasting"
[synth]
count = 2
duration_s = 12.0
[data]
train_fraction = 1.0
[model.pssm]
hidden = 2
depth = 2
[train]
epochs = 2
batch_size = 4
lr_candidates = [1e300]
"#;
    fs::write(d.join("nan.toml"), body).unwrap();
    assert!(bin(d, &["--config", "nan.toml", "--out", "data/records", "synth"])
        .status
        .success());
    assert!(bin(d, &["--config", "nan.toml", "--out", "data/prepared", "prep"])
        .status
        .success());
    let out = bin(d, &["--config", "nan.toml", "--out", "run", "train"]);
    assert_eq!(
        out.status.code(),
        Some(exit::NUMERIC),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = bin(d, &["--config", "nan.toml", "config"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("lr_candidates"));
}
