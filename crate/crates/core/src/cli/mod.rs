//! Command-line workflows: `generate`, `train`, `benchmark` and `predict`.
//!
//! Configuration is resolved in three layers. The preset is the base, a JSON
//! config file is deep-merged over it (unknown keys are rejected), and
//! command-line flags override both. The resolved document is echoed to
//! stderr and appended to `<out>/run.json`, so any run can be replayed with
//! `--config`.

mod commands;
pub mod plot;
pub mod report;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::DatasetConfig;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelKind};
use crate::train::TrainConfig;

pub use commands::{
    cmd_benchmark, cmd_generate, cmd_predict, cmd_train, BenchmarkReport, PredictArgs,
    PredictReport, TrainReport,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(format!("unknown preset '{s}' (expected desk or paper)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        })
    }
}

/// Everything a command needs; see the module docs for how it is resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    /// Model used by `train` and `predict`.
    pub model: ModelKind,
    /// Benchmark rows.
    pub models: Vec<ModelKind>,
    /// Benchmark columns.
    pub horizons: Vec<usize>,
    /// Propagated to the dataset, the training loop and model initialization.
    pub seed: u64,
    /// Dataset directory; defaults to `<out>/data`.
    pub data_dir: Option<PathBuf>,
    pub out: PathBuf,
    /// Window stride over the test series when evaluating.
    pub eval_stride: usize,
    pub dataset: DatasetConfig,
    pub model_config: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Desk => RunConfig {
                preset,
                model: ModelKind::Resoformer,
                models: ModelKind::ALL.to_vec(),
                horizons: vec![192, 96, 64, 32],
                seed: 7,
                data_dir: None,
                out: PathBuf::from("runs/desk"),
                eval_stride: 8,
                dataset: DatasetConfig::desk(),
                model_config: ModelConfig {
                    input_len: 64,
                    horizon: 32,
                    ..ModelConfig::default()
                },
                train: TrainConfig::default(),
            },
            Preset::Paper => RunConfig {
                preset,
                model: ModelKind::Resoformer,
                models: ModelKind::ALL.to_vec(),
                horizons: vec![720, 336, 192, 96],
                seed: 7,
                data_dir: None,
                out: PathBuf::from("runs/paper"),
                eval_stride: 1,
                dataset: DatasetConfig::paper(),
                model_config: ModelConfig {
                    input_len: 192,
                    horizon: 96,
                    ..ModelConfig::default()
                },
                train: TrainConfig {
                    batch_size: 1024,
                    stride: 1,
                    ..TrainConfig::default()
                },
            },
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir
            .clone()
            .unwrap_or_else(|| self.out.join("data"))
    }

    pub fn checkpoint_path(&self, kind: ModelKind, horizon: usize) -> PathBuf {
        self.out
            .join("checkpoints")
            .join(format!("{}_T{horizon}.ckpt", kind.name()))
    }

    pub fn history_path(&self, kind: ModelKind, horizon: usize) -> PathBuf {
        self.out
            .join("history")
            .join(format!("{}_T{horizon}.csv", kind.name()))
    }

    /// Copy of this config with the model horizon set to `horizon`.
    pub fn with_horizon(&self, horizon: usize) -> Self {
        let mut c = self.clone();
        c.model_config.horizon = horizon;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.model_config.validate()?;
        self.train.validate()?;
        if self.models.is_empty() || self.horizons.is_empty() {
            return Err(Error::config("models and horizons must be non-empty"));
        }
        if self.horizons.contains(&0) {
            return Err(Error::config("horizons must be ≥ 1"));
        }
        if self.eval_stride == 0 {
            return Err(Error::config("eval_stride must be ≥ 1"));
        }
        if self.dataset.seed != self.seed || self.train.seed != self.seed {
            return Err(Error::config(
                "dataset.seed and train.seed must equal the top-level seed",
            ));
        }
        Ok(())
    }
}

/// Objects merge key by key; anything else in `over` replaces `base`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
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

#[derive(Parser, Debug, Clone, Default)]
#[command(
    name = "resoformer",
    version,
    about = "Drive-shaft torsional resonance forecasting"
)]
pub struct Cli {
    /// JSON config file merged over the preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base preset: desk or paper.
    #[arg(long, global = true)]
    pub preset: Option<Preset>,
    /// zero, lstm, tcn or resoformer.
    #[arg(long, global = true)]
    pub model: Option<ModelKind>,
    /// Forecast horizon T. Restricts the benchmark to this column.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Seed for data generation and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Dataset directory (default `<out>/data`).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Overwrite a non-empty dataset directory.
    #[arg(long, global = true)]
    pub force: bool,
    /// Disable gradient-norm clipping.
    #[arg(long, global = true)]
    pub no_clip: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Simulate the train/test series and write them with a manifest.
    Generate,
    /// Train one model for one horizon and save its checkpoint.
    Train,
    /// Evaluate every (model, horizon) checkpoint and render the tables.
    Benchmark {
        /// Train cells whose checkpoint is missing instead of leaving gaps.
        #[arg(long)]
        train_missing: bool,
    },
    /// Forecast one window and write a CSV and an SVG plot.
    Predict {
        /// Defaults to `<out>/checkpoints/<model>_T<horizon>.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Series id; defaults to the first test series.
        #[arg(long)]
        series: Option<String>,
        /// First sample of the input window.
        #[arg(long, default_value_t = 0)]
        offset: usize,
    },
}

impl Cli {
    /// Preset, then config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let file: Option<Value> = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                Some(
                    serde_json::from_str(&text)
                        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?,
                )
            }
            None => None,
        };
        let file_preset = match file.as_ref().and_then(|v| v.get("preset")) {
            Some(p) => Some(
                serde_json::from_value::<Preset>(p.clone())
                    .map_err(|e| Error::format("preset", e.to_string()))?,
            ),
            None => None,
        };
        let preset = self.preset.or(file_preset).unwrap_or(Preset::Desk);
        let mut doc = serde_json::to_value(RunConfig::preset(preset))?;
        if let Some(file) = file {
            merge(&mut doc, file);
        }
        doc["preset"] = serde_json::to_value(preset)?;
        let origin = self
            .config
            .as_ref()
            .map_or("preset".to_string(), |p| p.display().to_string());
        let mut cfg: RunConfig =
            serde_json::from_value(doc).map_err(|e| Error::format(origin, e.to_string()))?;

        if let Some(m) = self.model {
            cfg.model = m;
        }
        if let Some(h) = self.horizon {
            cfg.model_config.horizon = h;
            cfg.horizons = vec![h];
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(d) = &self.data {
            cfg.data_dir = Some(d.clone());
        }
        if self.no_clip {
            cfg.train.clip_norm = None;
        }
        cfg.dataset.seed = cfg.seed;
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Serialize, Deserialize)]
struct RunRecord {
    command: String,
    unix_time: u64,
    config: RunConfig,
    artifacts: Vec<PathBuf>,
}

/// Append one entry to `<out>/run.json`.
pub fn record_run(cfg: &RunConfig, command: &str, artifacts: &[PathBuf]) -> Result<()> {
    let path = cfg.out.join("run.json");
    let mut runs: Vec<Value> = match fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(Error::io(&path, e)),
    };
    let unix_time = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let record = RunRecord {
        command: command.to_string(),
        unix_time,
        config: cfg.clone(),
        artifacts: artifacts.to_vec(),
    };
    runs.push(serde_json::to_value(record)?);
    create_dir(&cfg.out)?;
    fs::write(&path, serde_json::to_string_pretty(&runs)? + "\n").map_err(|e| Error::io(&path, e))
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Parse-free entry point shared by the binary and the tests.
pub fn run(cli: &Cli) -> Result<()> {
    let Some(command) = &cli.command else {
        return Err(Error::config(
            "no command given (generate, train, benchmark or predict)",
        ));
    };
    let cfg = cli.resolve()?;
    eprintln!(
        "resolved config (seed {}):\n{}",
        cfg.seed,
        serde_json::to_string_pretty(&cfg)?
    );
    match command {
        Command::Generate => {
            let manifest = cmd_generate(&cfg, cli.force)?;
            println!("wrote {}", manifest.display());
            record_run(&cfg, "generate", &[manifest])
        }
        Command::Train => {
            let r = cmd_train(&cfg)?;
            println!(
                "{} T={}: test MAE {:.4}  MSE {:.4}  ({:.2} s/epoch)",
                cfg.model.label(),
                cfg.model_config.horizon,
                r.test.mae(),
                r.test.mse(),
                r.epoch_seconds
            );
            println!("wrote {}", r.checkpoint.display());
            record_run(
                &cfg,
                "train",
                &[r.checkpoint.clone(), r.history_csv.clone()],
            )?;
            match r.aborted {
                Some(reason) => Err(Error::Training(format!(
                    "{reason}; saved last good checkpoint"
                ))),
                None => Ok(()),
            }
        }
        Command::Benchmark { train_missing } => {
            let r = cmd_benchmark(&cfg, *train_missing)?;
            println!("{}", r.text);
            for (kind, h) in &r.missing {
                eprintln!("missing checkpoint for {} T={h}", kind.label());
            }
            record_run(&cfg, "benchmark", &r.artifacts)
        }
        Command::Predict {
            checkpoint,
            series,
            offset,
        } => {
            let args = PredictArgs {
                checkpoint: checkpoint.clone(),
                series: series.clone(),
                offset: *offset,
            };
            let r = cmd_predict(&cfg, &args)?;
            println!("wrote {}\nwrote {}", r.csv.display(), r.svg.display());
            record_run(&cfg, "predict", &[r.csv, r.svg])
        }
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
