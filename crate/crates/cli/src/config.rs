//! Run configuration: built-in defaults, overlaid by an optional TOML file,
//! overlaid by flags given on the command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pouring_core::acoustics::ContainerSpec;
use pouring_core::model::EncoderKind;
use pouring_core::training::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

/// Every knob of every subcommand, flat, as written to `meta.json` and
/// `config.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; unset means one per available core.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub verbose: bool,
    /// TOML file with extra `[[container]]` entries.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub container_library: Option<PathBuf>,

    // synth
    pub pours: usize,
    pub sample_rate: u32,
    pub containers: Vec<String>,

    // train / eval input
    pub data: PathBuf,

    // train
    pub kind: EncoderKind,
    pub hidden: usize,
    pub head_hidden: usize,
    pub alpha: f64,
    pub clip_seconds: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub val_fraction: f64,
    pub count_per_second: f64,
    pub label_scale_mm: f64,

    // eval
    /// `name=path` or a bare path (named after the file stem).
    pub checkpoints: Vec<String>,

    // pour
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    pub container: String,
    pub target_mm: Vec<f64>,
    pub repeats: usize,
    pub actuator_delay_s: f64,
    pub warmup_s: f64,
    pub oracle: bool,

    // gradcheck
    pub gradcheck_kinds: Vec<EncoderKind>,
    pub gradcheck_input: usize,
    pub gradcheck_hidden: usize,
    pub gradcheck_frames: Vec<usize>,
    pub gradcheck_seeds: u64,
    pub gradcheck_tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrupt_gradient: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            threads: None,
            verbose: false,
            container_library: None,
            pours: 300,
            sample_rate: 44_100,
            containers: ContainerSpec::training_set().into_iter().map(|c| c.name).collect(),
            data: PathBuf::from("data"),
            kind: t.kind,
            hidden: t.hidden,
            head_hidden: t.head_hidden,
            alpha: t.alpha,
            clip_seconds: t.clip_seconds,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            val_fraction: t.val_fraction,
            count_per_second: t.count_per_second,
            label_scale_mm: t.label_scale_mm,
            checkpoints: Vec::new(),
            model: None,
            container: "glass".into(),
            target_mm: vec![40.0, 50.0, 60.0, 70.0, 80.0],
            repeats: 5,
            actuator_delay_s: 0.1,
            warmup_s: 1.0,
            oracle: false,
            gradcheck_kinds: vec![EncoderKind::Lstm, EncoderKind::Gru, EncoderKind::Fc],
            gradcheck_input: 257,
            gradcheck_hidden: 8,
            gradcheck_frames: vec![1, 3, 7],
            gradcheck_seeds: 5,
            gradcheck_tolerance: 1e-4,
            corrupt_gradient: None,
        }
    }
}

impl RunConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            kind: self.kind,
            hidden: self.hidden,
            head_hidden: self.head_hidden,
            alpha: self.alpha,
            clip_seconds: self.clip_seconds,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            val_fraction: self.val_fraction,
            count_per_second: self.count_per_second,
            label_scale_mm: self.label_scale_mm,
        }
    }

    /// Defaults, then `file` (if any), then `flags`: a JSON object holding
    /// only the options given explicitly on the command line.
    pub fn resolve(file: Option<&Path>, flags: Map<String, Value>) -> Result<Self, CliError> {
        let mut merged = match serde_json::to_value(RunConfig::default())? {
            Value::Object(m) => m,
            _ => unreachable!("a struct serializes to an object"),
        };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let table: toml::Table =
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            match serde_json::to_value(table)? {
                Value::Object(m) => merged.extend(m),
                _ => unreachable!("a TOML table is an object"),
            }
        }
        merged.extend(flags);
        serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Built-in containers plus any from `container_library`, by name.
    pub fn container_library(&self) -> Result<BTreeMap<String, ContainerSpec>, CliError> {
        let mut lib: BTreeMap<String, ContainerSpec> = ContainerSpec::training_set()
            .into_iter()
            .chain(ContainerSpec::unseen_set())
            .map(|c| (c.name.clone(), c))
            .collect();
        if let Some(path) = &self.container_library {
            #[derive(Deserialize)]
            struct Library {
                container: Vec<ContainerSpec>,
            }
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let extra: Library =
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            for c in extra.container {
                c.validate()?;
                lib.insert(c.name.clone(), c);
            }
        }
        Ok(lib)
    }

    pub fn lookup_container(&self, name: &str) -> Result<ContainerSpec, CliError> {
        self.container_library()?
            .remove(name)
            .ok_or_else(|| CliError::Config(format!("unknown container `{name}`")))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }
}
