//! Configuration resolution: command-line flags override config-file keys,
//! which override built-in defaults. The fully resolved configuration is
//! serialized next to every output so any artifact can be regenerated.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use semreduce_core::models::Hyperparams;
use semreduce_core::scenegen::GeneratorConfig;

/// Optional keys accepted in a `--config` JSON file (flat layout). Unknown
/// keys are tolerated so generator keys can live in the same file.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct CliConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub preset: Option<String>,
    pub n: Option<usize>,
    pub train_ratio: Option<f64>,
    pub val_ratio: Option<f64>,
    pub test_ratio: Option<f64>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub mode: Option<String>,
    pub target: Option<String>,
    pub alpha: Option<f64>,
    pub layer: Option<usize>,
    pub split: Option<String>,
    pub ids: Option<String>,
}

/// A config file parses into both the known run keys and (separately) the
/// scene-generator keys; absent generator keys fall back to defaults.
pub fn load_config_file(path: Option<&Path>) -> Result<(CliConfig, GeneratorConfig)> {
    match path {
        None => Ok((CliConfig::default(), GeneratorConfig::default())),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            let cli: CliConfig =
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
            let generator: GeneratorConfig =
                serde_json::from_str(&text).with_context(|| format!("parsing generator keys in {}", p.display()))?;
            Ok((cli, generator))
        }
    }
}

/// Flag-over-file-over-default resolution for one knob.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn resolve_hyperparams(
    lr: Option<f64>,
    batch: Option<usize>,
    epochs: Option<usize>,
    seed: Option<u64>,
    file: &CliConfig,
    defaults: Hyperparams,
) -> Hyperparams {
    Hyperparams {
        learning_rate: pick(lr, file.learning_rate, defaults.learning_rate),
        batch_size: pick(batch, file.batch_size, defaults.batch_size),
        epochs: pick(epochs, file.epochs, defaults.epochs),
        seed: pick(seed, file.seed, defaults.seed),
    }
}

/// The exact resolved configuration of one command invocation, written as
/// `run_config.json` into the command's output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perception: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyperparams: Option<Hyperparams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compare_all: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compare_remapped: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: &str) -> RunConfig {
        RunConfig {
            command: command.to_string(),
            seed: None,
            data: None,
            preset: None,
            checkpoint: None,
            perception: None,
            hyperparams: None,
            mode: None,
            target: None,
            alpha: None,
            layer: None,
            ids: None,
            split: None,
            compare_all: None,
            compare_remapped: None,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self).expect("run config serializes") + "\n";
        fs::write(dir.join("run_config.json"), json)
            .with_context(|| format!("writing run_config.json into {}", dir.display()))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(dir.join("run_config.json"))
            .with_context(|| format!("reading run_config.json from {}", dir.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}
