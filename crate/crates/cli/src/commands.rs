//! The benchmark commands. Each writes its outputs plus `run.toml` (the
//! resolved configuration) into `config.out`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ecgbench_autodiff::{checkpoint, Adam, AdamConfig, ParamStore};
use ecgbench_core::metrics::{evaluate_task, shift_probe, EvalReport, Extractor, ShiftRow};
use ecgbench_core::model::{Scope, Transformer, TransformerConfig, BACKBONE_PREFIX};
use ecgbench_core::signal::preprocess::{impute_checked, resample_100hz, split_channels};
use ecgbench_core::signal::split::{split_ids, SplitSpec};
use ecgbench_core::signal::synth::{synth_ecg, synth_paired};
use ecgbench_core::signal::window::{generation_pairs, rebalance, sort_canonical, windowize, Window};
use ecgbench_core::signal::{list_records, load_record, save_record, Record};
use ecgbench_core::tasks::train::derive_seed;
use ecgbench_core::tasks::{build_pretrain, pretrain, train, train_resume, HeadConfig, LogEntry, TaskModel};
use ecgbench_core::TaskKind;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ProbeSplit, RunConfig, SynthMode};
use crate::error::{CliError, Result};
use crate::{shards, table};

/// Seed streams derived from the run seed.
mod stream {
    pub const SYNTH: u64 = 1;
    pub const INIT: u64 = 2;
    pub const EXTRACTOR: u64 = 3;
    pub const RESUME: u64 = 4;
}

pub const SPLIT_MANIFEST: &str = "split.json";
pub const DISCARD_LOG: &str = "discards.csv";
pub const RUN_CONFIG: &str = "run.toml";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const PRETRAIN_CHECKPOINT: &str = "pretrain";
pub const PRETRAIN_LOG: &str = "pretrain_log.jsonl";
pub const MODEL_CHECKPOINT: &str = "model";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const PROBE_CSV: &str = "shift_probe.csv";
pub const PROBE_TABLE: &str = "shift_probe.md";
pub const TABLE_MD: &str = "table.md";
pub const TABLE_CSV: &str = "table.csv";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes") + "\n"
}

/// `<base>-adam`, the optimizer state stored next to a checkpoint.
fn adam_base(base: &Path) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push("-adam");
    PathBuf::from(s)
}

/// Writes `run.toml` and returns the serialized text and its fingerprint.
fn record_config(config: &RunConfig) -> Result<(String, String)> {
    let text = config.to_toml()?;
    write(&config.out.join(RUN_CONFIG), &text)?;
    let fp = crate::config::fingerprint(&text);
    Ok((text, fp))
}

fn write_log(path: &Path, entries: &[LogEntry]) -> Result<()> {
    let mut s = String::new();
    for e in entries {
        s += &serde_json::to_string(e).expect("log entry serializes");
        s.push('\n');
    }
    write(path, s)
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub dir: PathBuf,
    pub records: usize,
    pub samples_per_channel: usize,
    pub mode: SynthMode,
}

impl std::fmt::Display for SynthSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "wrote {} {:?} records ({} samples per channel) to {}",
            self.records,
            self.mode,
            self.samples_per_channel,
            self.dir.display()
        )
    }
}

/// Record `i` of the synthetic corpus.
pub fn synth_record(config: &RunConfig, i: usize) -> Result<Record> {
    let s = &config.synth;
    let mut params = s.params.clone();
    params.seed = derive_seed(config.seed, stream::SYNTH, i as u64);
    let id = format!("rec{i:04}");
    let r = match s.mode {
        SynthMode::Single => synth_ecg(id, &params, s.duration_s)?,
        SynthMode::Paired => synth_paired(id, &params, s.duration_s)?,
        SynthMode::Classes => {
            let class = i % s.class_rates.len();
            params.heart_rate_bpm = s.class_rates[class];
            params.validate()?;
            let mut r = synth_ecg(id, &params, s.duration_s)?;
            r.class_label = Some(class as u32);
            r
        }
    };
    Ok(r)
}

pub fn synth(config: &RunConfig) -> Result<SynthSummary> {
    let records: Vec<Record> = (0..config.synth.count)
        .into_par_iter()
        .map(|i| synth_record(config, i))
        .collect::<Result<_>>()?;
    for r in &records {
        save_record(r, &config.out)?;
    }
    record_config(config)?;
    Ok(SynthSummary {
        dir: config.out.clone(),
        records: records.len(),
        samples_per_channel: records.first().map_or(0, Record::len),
        mode: config.synth.mode,
    })
}

// ---------------------------------------------------------------- prep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscardEntry {
    pub record: String,
    pub reason: String,
    pub detail: String,
}

/// Index of a prepared dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub dataset: String,
    pub task: TaskKind,
    pub seed: u64,
    pub train_fraction: f64,
    pub stride: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub train_windows: usize,
    pub test_windows: usize,
    pub train_shards: Vec<String>,
    pub test_shards: Vec<String>,
    pub discarded: Vec<DiscardEntry>,
}

impl std::fmt::Display for SplitManifest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{} records kept ({} train / {} test), {} discarded",
            self.train_ids.len() + self.test_ids.len(),
            self.train_ids.len(),
            self.test_ids.len(),
            self.discarded.len()
        )?;
        for d in &self.discarded {
            writeln!(f, "  discarded {}: {}", d.record, d.detail)?;
        }
        write!(
            f,
            "{} train windows, {} test windows",
            self.train_windows, self.test_windows
        )
    }
}

/// Windows of one preprocessed record. The generation target channel is
/// never used as an input.
fn record_windows(r: &Record, task: TaskKind, stride: usize) -> Result<Vec<Window>> {
    let channels = split_channels(r);
    let mut out = Vec::new();
    if task == TaskKind::Generation {
        for (x, target) in generation_pairs(&channels)? {
            out.extend(windowize(&x, Some(task), stride, Some(&target))?);
        }
    } else {
        for c in channels
            .iter()
            .filter(|c| r.pair_channel.as_deref() != Some(c.channel_names[0].as_str()))
        {
            out.extend(windowize(c, Some(task), stride, None)?);
        }
    }
    Ok(out)
}

pub fn prep(config: &RunConfig) -> Result<SplitManifest> {
    let data = &config.data;
    let paths = list_records(&data.records)?;
    if paths.is_empty() {
        return Err(ecgbench_core::Error::Degenerate(format!("no records in {}", data.records.display())).into());
    }
    let outcomes: Vec<std::result::Result<Record, DiscardEntry>> = paths
        .par_iter()
        .map(|p| {
            let r = resample_100hz(&load_record(p)?)?;
            Ok(impute_checked(&r).map_err(|d| DiscardEntry {
                record: r.id.clone(),
                reason: d.tag().into(),
                detail: d.to_string(),
            }))
        })
        .collect::<Result<_>>()?;
    let (mut kept, mut discarded) = (Vec::new(), Vec::new());
    for o in outcomes {
        match o {
            Ok(r) => kept.push(r),
            Err(d) => discarded.push(d),
        }
    }
    if kept.is_empty() {
        return Err(ecgbench_core::Error::Degenerate(format!("all {} records were discarded", paths.len())).into());
    }
    let spec = SplitSpec {
        seed: config.seed,
        train_fraction: data.train_fraction,
    };
    let (mut train_ids, mut test_ids) = split_ids(kept.iter().map(|r| r.id.as_str()), &spec)?;
    let per_record: Vec<Vec<Window>> = kept
        .par_iter()
        .map(|r| record_windows(r, config.task, data.stride))
        .collect::<Result<_>>()?;
    let (mut train_w, mut test_w) = (Vec::new(), Vec::new());
    for (r, ws) in kept.iter().zip(per_record) {
        if train_ids.contains(&r.id) {
            train_w.extend(ws);
        } else {
            test_w.extend(ws);
        }
    }
    if train_w.is_empty() && test_w.is_empty() {
        return Err(ecgbench_core::Error::Degenerate("no record is long enough for one window".into()).into());
    }
    sort_canonical(&mut train_w);
    sort_canonical(&mut test_w);
    if let (Some(f), TaskKind::Classification) = (data.rebalance, config.task) {
        train_w = rebalance(&train_w, f, config.seed)?;
        test_w = rebalance(&test_w, f, config.seed)?;
    }
    train_ids.sort();
    test_ids.sort();
    let dir = &config.out;
    let manifest = SplitManifest {
        dataset: data.dataset.clone(),
        task: config.task,
        seed: config.seed,
        train_fraction: data.train_fraction,
        stride: data.stride,
        train_ids,
        test_ids,
        train_windows: train_w.len(),
        test_windows: test_w.len(),
        train_shards: shards::write_split(dir, "train", &train_w)?,
        test_shards: shards::write_split(dir, "test", &test_w)?,
        discarded,
    };
    write(&dir.join(SPLIT_MANIFEST), json(&manifest))?;
    let mut log = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Data(format!("discard log: {e}"));
    log.write_record(["record", "reason", "detail"]).map_err(csv_err)?;
    for d in &manifest.discarded {
        log.write_record([&d.record, &d.reason, &d.detail]).map_err(csv_err)?;
    }
    write(&dir.join(DISCARD_LOG), log.into_inner().expect("in-memory writer"))?;
    record_config(config)?;
    Ok(manifest)
}

/// A prepared dataset on disk.
pub struct Prepared {
    pub dir: PathBuf,
    pub manifest: SplitManifest,
}

impl Prepared {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(SPLIT_MANIFEST);
        let manifest = serde_json::from_str(&read_to_string(&path)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn train(&self) -> Result<Vec<Window>> {
        shards::read_shards(&self.dir, &self.manifest.train_shards)
    }

    pub fn test(&self) -> Result<Vec<Window>> {
        shards::read_shards(&self.dir, &self.manifest.test_shards)
    }

    fn for_task(dir: &Path, task: TaskKind) -> Result<Self> {
        let p = Self::open(dir)?;
        if p.manifest.task != task {
            return Err(CliError::Config(format!(
                "{} holds {} windows but the run is configured for {task}",
                dir.display(),
                p.manifest.task
            )));
        }
        Ok(p)
    }
}

// ---------------------------------------------------------------- pretrain

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainSummary {
    pub checkpoint: PathBuf,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs_done: usize,
    pub steps: u64,
}

impl std::fmt::Display for PretrainSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "loss {:.6} -> {:.6} after {} epochs ({} optimizer steps); checkpoint {}",
            self.initial_loss,
            self.final_loss,
            self.epochs_done,
            self.steps,
            self.checkpoint.display()
        )
    }
}

/// Fields of the pretraining checkpoint metadata that a resume relies on.
#[derive(Debug, Deserialize)]
struct ResumeMeta {
    model: ecgbench_core::model::ModelConfig,
    objective: ecgbench_core::tasks::PretrainKind,
    epochs_done: usize,
    step: u64,
}

fn meta_field<T: for<'de> Deserialize<'de>>(meta: &serde_json::Value, base: &Path) -> Result<T> {
    serde_json::from_value(meta.clone())
        .map_err(|e| CliError::Data(format!("{}: checkpoint metadata: {e}", base.display())))
}

pub fn pretrain_cmd(config: &RunConfig) -> Result<PretrainSummary> {
    let corpus = Prepared::open(&config.data.prepared)?.train()?;
    let (text, fp) = record_config(config)?;
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, stream::INIT, 0));
    let objective = build_pretrain(&config.model, config.pretrain.objective, &mut store, &mut rng)?;
    let mut spec = config.pretrain.train.clone();
    let (optimizer, epochs_before) = match &config.checkpoints.resume {
        None => (None, 0),
        Some(base) => {
            let (weights, manifest) = checkpoint::load(base)?;
            let meta: ResumeMeta = meta_field(&manifest.meta, base)?;
            if meta.model != config.model || meta.objective != config.pretrain.objective {
                return Err(CliError::Config(format!(
                    "{} was trained with a different model or objective",
                    base.display()
                )));
            }
            if store.load_matching(&weights)? != store.len() {
                return Err(CliError::Data(format!("{} does not cover the model", base.display())));
            }
            let (state, _) = checkpoint::load(&adam_base(base))?;
            if spec.lr_candidates.len() != 1 {
                return Err(CliError::Config("resuming requires a single learning rate".into()));
            }
            let adam_cfg = AdamConfig {
                lr: spec.lr_candidates[0],
                ..Default::default()
            };
            spec.seed = derive_seed(spec.seed, stream::RESUME, meta.epochs_done as u64);
            (
                Some(Adam::restore(adam_cfg, &store, &state, meta.step)?),
                meta.epochs_done,
            )
        }
    };
    let mut log = Vec::new();
    let outcome = if optimizer.is_some() {
        train_resume(objective.as_ref(), &store, optimizer, &corpus, &spec, &mut |e| {
            log.push(e.clone())
        })?
    } else {
        pretrain(objective.as_ref(), &store, &corpus, &spec, &mut |e| log.push(e.clone()))?
    };
    for e in &mut log {
        e.epoch += epochs_before;
    }
    let epochs_done = epochs_before + spec.epochs;
    let steps = outcome.optimizer.step_count();
    let meta = serde_json::json!({
        "kind": "pretrain",
        "model": config.model,
        "objective": config.pretrain.objective,
        "train": config.pretrain.train,
        "preset": config.preset,
        "fingerprint": fp,
        "config": text,
        "epochs_done": epochs_done,
        "step": steps,
        "lr": outcome.lr,
        "initial_loss": outcome.initial_loss,
        "final_loss": outcome.final_loss(),
    });
    let base = config.out.join(PRETRAIN_CHECKPOINT);
    checkpoint::save(&outcome.store, &base, meta)?;
    checkpoint::save(
        &outcome.optimizer.export(&outcome.store)?,
        &adam_base(&base),
        serde_json::json!({ "step": steps }),
    )?;
    let mut full_log = Vec::new();
    if let Some(base) = &config.checkpoints.resume {
        let prev = base.with_file_name(PRETRAIN_LOG);
        if prev.exists() {
            full_log.push(read_to_string(&prev)?);
        }
    }
    let path = config.out.join(PRETRAIN_LOG);
    write_log(&path, &log)?;
    if !full_log.is_empty() {
        full_log.push(read_to_string(&path)?);
        write(&path, full_log.concat())?;
    }
    Ok(PretrainSummary {
        checkpoint: base,
        initial_loss: outcome.initial_loss,
        final_loss: outcome.final_loss(),
        epochs_done,
        steps,
    })
}

// ---------------------------------------------------------------- train / eval

/// Feature extractor for FFD: the configured checkpoint, or a transformer
/// with default settings initialised from the run seed.
pub fn ffd_extractor(config: &RunConfig) -> Result<Extractor> {
    if let Some(base) = &config.checkpoints.extractor {
        return Ok(Extractor::from_checkpoint(base)?);
    }
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, stream::EXTRACTOR, 0));
    let cfg = TransformerConfig::default();
    Transformer::new(cfg.clone(), &mut Scope::new(&mut store, &mut rng, BACKBONE_PREFIX))?;
    Ok(Extractor::new(cfg, &store)?)
}

fn evaluate(
    config: &RunConfig,
    model: &TaskModel,
    store: &ParamStore,
    test: &[Window],
    dataset: &str,
    text: String,
    fingerprint: String,
) -> Result<EvalReport> {
    let extractor = match model.task {
        TaskKind::Forecasting | TaskKind::Generation => Some(ffd_extractor(config)?),
        _ => None,
    };
    let metrics = evaluate_task(model, store, test, &config.events, extractor.as_ref())?;
    let report = EvalReport {
        task: model.task,
        dataset: dataset.to_string(),
        model: model.backbone.kind().to_string(),
        metrics,
        fingerprint,
        seed: config.seed,
        config: text,
    };
    report.validate()?;
    write(&config.out.join(REPORT_JSON), report.to_json()?)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write(&config.out.join(REPORT_CSV), csv)?;
    Ok(report)
}

pub fn train_cmd(config: &RunConfig) -> Result<EvalReport> {
    let data = Prepared::for_task(&config.data.prepared, config.task)?;
    let (train_w, test_w) = (data.train()?, data.test()?);
    let (text, fp) = record_config(config)?;
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, stream::INIT, 0));
    let model = TaskModel::build(&config.model, config.task, &config.head, &mut store, &mut rng)?;
    match &config.checkpoints.pretrained {
        Some(base) => {
            let (weights, _) = checkpoint::load(base)?;
            let backbone = store.iter().filter(|(_, n, _)| n.starts_with(BACKBONE_PREFIX)).count();
            let copied = store
                .load_matching(&weights)
                .map_err(|e| CliError::Config(e.to_string()))?;
            if copied != backbone {
                return Err(CliError::Config(format!(
                    "{} provides {copied} of {backbone} backbone parameters",
                    base.display()
                )));
            }
        }
        None if config.train.freeze_backbone => {
            return Err(CliError::Config(
                "freezing the backbone needs checkpoints.pretrained".into(),
            ));
        }
        None => {}
    }
    let mut log = Vec::new();
    let outcome = train(&model, &store, &train_w, &config.train, &mut |e| log.push(e.clone()))?;
    write_log(&config.out.join(TRAIN_LOG), &log)?;
    let meta = serde_json::json!({
        "kind": "task",
        "task": config.task,
        "model": config.model,
        "head": config.head,
        "train": config.train,
        "preset": config.preset,
        "fingerprint": fp,
        "lr": outcome.lr,
        "initial_loss": outcome.initial_loss,
        "final_loss": outcome.final_loss(),
    });
    checkpoint::save(&outcome.store, &config.out.join(MODEL_CHECKPOINT), meta)?;
    evaluate(
        config,
        &model,
        &outcome.store,
        &test_w,
        &data.manifest.dataset,
        text,
        fp,
    )
}

#[derive(Debug, Deserialize)]
struct TaskMeta {
    task: TaskKind,
    model: ecgbench_core::model::ModelConfig,
    head: HeadConfig,
}

pub fn eval_cmd(config: &RunConfig) -> Result<EvalReport> {
    let base = config
        .checkpoints
        .model
        .clone()
        .unwrap_or_else(|| config.out.join(MODEL_CHECKPOINT));
    let (weights, manifest) = checkpoint::load(&base)?;
    let meta: TaskMeta = meta_field(&manifest.meta, &base)?;
    let data = Prepared::for_task(&config.data.prepared, meta.task)?;
    let test = data.test()?;
    let (text, fp) = record_config(config)?;
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = TaskModel::build(&meta.model, meta.task, &meta.head, &mut store, &mut rng)?;
    if store.load_matching(&weights)? != store.len() {
        return Err(CliError::Data(format!(
            "{} does not cover the task model",
            base.display()
        )));
    }
    evaluate(config, &model, &store, &test, &data.manifest.dataset, text, fp)
}

// ---------------------------------------------------------------- probe

pub fn probe_windows(config: &RunConfig) -> Result<Vec<Window>> {
    let data = Prepared::open(&config.data.prepared)?;
    let mut ws = match config.probe.split {
        ProbeSplit::All => {
            let mut w = data.train()?;
            w.extend(data.test()?);
            w
        }
        ProbeSplit::Train => data.train()?,
        ProbeSplit::Test => data.test()?,
    };
    ws.truncate(config.probe.max_windows);
    if ws.len() < 2 {
        return Err(ecgbench_core::Error::Degenerate(format!("shift probe needs 2 windows, have {}", ws.len())).into());
    }
    Ok(ws)
}

pub fn render_probe(rows: &[ShiftRow]) -> String {
    let mut s = String::from("| shift | mse | ffd |\n|---:|---:|---:|\n");
    for r in rows {
        let _ = writeln!(s, "| {} | {:.6} | {:.6} |", r.shift, r.mse, r.ffd);
    }
    s
}

pub fn probe_cmd(config: &RunConfig) -> Result<Vec<ShiftRow>> {
    let base = config
        .checkpoints
        .extractor
        .as_ref()
        .ok_or_else(|| CliError::Config("probe-shift needs checkpoints.extractor".into()))?;
    let extractor = Extractor::from_checkpoint(base)?;
    let series: Vec<Vec<f64>> = probe_windows(config)?.iter().map(|w| w.input().values).collect();
    let rows = shift_probe(&series, &extractor, config.probe.max_shift, config.probe.step)?;
    record_config(config)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Data(format!("probe table: {e}"));
    for r in &rows {
        w.serialize(r).map_err(csv_err)?;
    }
    write(&config.out.join(PROBE_CSV), w.into_inner().expect("in-memory writer"))?;
    write(&config.out.join(PROBE_TABLE), render_probe(&rows))?;
    Ok(rows)
}

// ---------------------------------------------------------------- report

/// Loads a report from a file or from `<dir>/report.json`.
pub fn load_report(path: &Path) -> Result<EvalReport> {
    let file = if path.is_dir() {
        path.join(REPORT_JSON)
    } else {
        path.to_path_buf()
    };
    EvalReport::from_json(&read_to_string(&file)?).map_err(|e| CliError::Data(format!("{}: {e}", file.display())))
}

pub fn report_cmd(config: &RunConfig, inputs: &[PathBuf]) -> Result<Vec<table::Table>> {
    let reports: Vec<EvalReport> = inputs.iter().map(|p| load_report(p)).collect::<Result<_>>()?;
    let tables = table::build_tables(&reports)?;
    let md: Vec<String> = tables.iter().map(table::Table::to_markdown).collect();
    write(&config.out.join(TABLE_MD), md.join("\n"))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for (i, t) in tables.iter().enumerate() {
        t.write_csv(&mut w, i == 0)?;
    }
    write(&config.out.join(TABLE_CSV), w.into_inner().expect("in-memory writer"))?;
    Ok(tables)
}
