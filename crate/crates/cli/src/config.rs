//! Run configuration.
//!
//! Values are layered: preset defaults, then the TOML file, then command-line
//! flags. Every field has a default and unknown keys are rejected.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ecgbench_core::metrics::EventConfig;
use ecgbench_core::model::ModelConfig;
use ecgbench_core::signal::synth::SynthParams;
use ecgbench_core::signal::window::DEFAULT_STRIDE;
use ecgbench_core::tasks::{HeadConfig, PretrainKind, TrainSpec};
use ecgbench_core::TaskKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Base layer of default values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Small batches and few epochs for a single workstation.
    #[default]
    Desk,
    /// The published protocol: pretraining with batch 8192 for 300 epochs at
    /// lr 1e-6; task training with batch 1024 for 100 epochs, lr chosen
    /// from {1e-4, 5e-5, 1e-5}.
    Paper,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    /// One channel with R-peak annotations.
    #[default]
    Single,
    /// Noisy input and clean target channels for generation.
    Paired,
    /// One channel per record; record `i` gets class `i mod n` and the
    /// heart rate `class_rates[class]`.
    Classes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub count: usize,
    pub duration_s: f64,
    pub mode: SynthMode,
    pub class_rates: Vec<f64>,
    /// Waveform template. `seed` is replaced per record by one derived from
    /// the run seed and the record index.
    pub params: SynthParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 20,
            duration_s: 30.0,
            mode: SynthMode::Single,
            class_rates: vec![60.0, 120.0],
            params: SynthParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset name used in reports.
    pub dataset: String,
    /// Directory of raw records (`prep` input, `synth` output).
    pub records: PathBuf,
    /// Directory of prepared windows (`prep` output).
    pub prepared: PathBuf,
    pub stride: usize,
    pub train_fraction: f64,
    /// Classification only: drop classes under this share and downsample the
    /// rest, per split.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rebalance: Option<f64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dataset: "synthetic".into(),
            records: PathBuf::from("data/records"),
            prepared: PathBuf::from("data/prepared"),
            stride: DEFAULT_STRIDE,
            train_fraction: 0.5,
            rebalance: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub objective: PretrainKind,
    pub train: TrainSpec,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            objective: PretrainKind::Mtp,
            train: TrainSpec {
                epochs: 100,
                batch_size: 256,
                lr_candidates: vec![1e-4],
                ..Default::default()
            },
        }
    }
}

/// Checkpoint base paths (without the `.json`/`.bin` suffix).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckpointConfig {
    /// Pretrained backbone loaded by `train`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pretrained: Option<PathBuf>,
    /// Pretraining checkpoint that `pretrain` continues from.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resume: Option<PathBuf>,
    /// Task model evaluated by `eval`; defaults to `<out>/model`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Transformer checkpoint used as the FFD feature extractor. Without one,
    /// FFD uses a randomly initialised extractor seeded from the run seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extractor: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeSplit {
    #[default]
    All,
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub max_shift: usize,
    pub step: usize,
    pub split: ProbeSplit,
    /// Leading windows of the chosen split used by the probe.
    pub max_windows: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            max_shift: 40,
            step: 4,
            split: ProbeSplit::All,
            max_windows: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub task: TaskKind,
    pub out: PathBuf,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub head: HeadConfig,
    pub train: TrainSpec,
    pub pretrain: PretrainConfig,
    pub events: EventConfig,
    pub probe: ProbeConfig,
    pub checkpoints: CheckpointConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_preset(Preset::Desk)
    }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn for_preset(preset: Preset) -> Self {
        let mut c = Self {
            preset,
            seed: 0,
            task: TaskKind::Generation,
            out: PathBuf::from("runs/default"),
            data: DataConfig::default(),
            synth: SynthConfig::default(),
            model: ModelConfig::default(),
            head: HeadConfig::default(),
            train: TrainSpec::default(),
            pretrain: PretrainConfig::default(),
            events: EventConfig::default(),
            probe: ProbeConfig::default(),
            checkpoints: CheckpointConfig::default(),
        };
        if preset == Preset::Paper {
            c.pretrain.train.batch_size = 8192;
            c.pretrain.train.epochs = 300;
            c.pretrain.train.lr_candidates = vec![1e-6];
            c.train.batch_size = 1024;
            c.train.epochs = 100;
            c.train.lr_candidates = vec![1e-4, 5e-5, 1e-5];
        }
        c
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("serialize: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::layered(text, &Overrides::default())
    }

    /// Preset defaults, then `text`, then `flags`. The preset is taken from
    /// the flag, else from the file's `preset` key, else desk.
    pub fn layered(text: &str, flags: &Overrides) -> Result<Self> {
        let file: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let preset = match (flags.preset, file.get("preset")) {
            (Some(p), _) => p,
            (None, Some(v)) => Preset::deserialize(v.clone()).map_err(|e| CliError::Config(format!("preset: {e}")))?,
            (None, None) => Preset::Desk,
        };
        let base = toml::Table::try_from(Self::for_preset(preset)).map_err(|e| CliError::Config(e.to_string()))?;
        let mut merged = toml::Value::Table(base);
        merge(&mut merged, toml::Value::Table(file));
        let mut config = Self::deserialize(merged).map_err(|e| CliError::Config(e.to_string()))?;
        config.preset = preset;
        if let Some(seed) = flags.seed {
            config.seed = seed;
            config.train.seed = seed;
            config.pretrain.train.seed = seed;
        }
        if let Some(out) = &flags.out {
            config.out = out.clone();
        }
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` (or uses defaults when `None`) and applies `flags`.
    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::layered(&text, flags)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        // TOML integers are signed 64-bit.
        let seeds = [
            self.seed,
            self.train.seed,
            self.pretrain.train.seed,
            self.synth.params.seed,
        ];
        if let Some(s) = seeds.iter().find(|&&s| s > i64::MAX as u64) {
            return bad(format!("seed {s} exceeds {}", i64::MAX));
        }
        self.synth.params.validate()?;
        if self.synth.count == 0 || !(self.synth.duration_s > 0.0) {
            return bad("synth count and duration must be positive".into());
        }
        if self.synth.mode == SynthMode::Classes && self.synth.class_rates.len() < 2 {
            return bad("class mode needs at least 2 heart rates".into());
        }
        if self.data.stride == 0 {
            return bad("window stride must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.data.train_fraction) {
            return bad(format!("train fraction {} outside [0, 1]", self.data.train_fraction));
        }
        if let Some(f) = self.data.rebalance {
            if !(0.0..1.0).contains(&f) {
                return bad(format!("rebalance fraction {f} outside [0, 1)"));
            }
        }
        self.model.pssm.validate()?;
        self.model.transformer.validate()?;
        self.train.validate()?;
        self.pretrain.train.validate()?;
        if self.probe.step == 0 {
            return bad("probe step must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 of the serialized configuration, hex encoded.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(fingerprint(&self.to_toml()?))
    }
}

pub fn fingerprint(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Recursively overlays `top` onto `base`: tables merge key by key, any other
/// value replaces.
fn merge(base: &mut toml::Value, top: toml::Value) {
    match (base, top) {
        (toml::Value::Table(b), toml::Value::Table(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
