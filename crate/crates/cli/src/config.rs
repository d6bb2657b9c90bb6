//! Flat `key=value` configuration with command-line overrides.
//!
//! Keys share the names of the long flags (`seed-kb`, `top-percent`, ...).
//! Blank lines and lines starting with `#` are ignored. Relative paths in a
//! config file are resolved against the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use graphkb::ranker::RankerConfig;
use graphkb::score::DEFAULT_THRESHOLD;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub corpus: Option<PathBuf>,
    pub seed_kb: Option<PathBuf>,
    pub out: PathBuf,
    pub annotations: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub threshold: f64,
    pub top_percent: f64,
    pub dim: usize,
    pub layers: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub positional: bool,
    pub per_relation: usize,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let ranker = RankerConfig::default();
        PipelineConfig {
            corpus: None,
            seed_kb: None,
            out: PathBuf::from("."),
            annotations: None,
            checkpoint: None,
            threshold: DEFAULT_THRESHOLD,
            top_percent: 1.0,
            dim: ranker.embed_dim,
            layers: ranker.encoder_layers,
            lr: ranker.learning_rate,
            epochs: ranker.epochs,
            seed: ranker.rng_seed,
            positional: ranker.positional,
            per_relation: 1000,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

/// Flags accepted by every command; each overrides the config-file key of
/// the same name.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// key=value configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Graph corpus (JSON lines)
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Seed knowledge (head, relation, tail TSV)
    #[arg(long = "seed-kb", global = true)]
    pub seed_kb: Option<PathBuf>,
    /// Directory holding every stage's files
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Labeled annotation TSV for train-ranker
    #[arg(long, global = true)]
    pub annotations: Option<PathBuf>,
    /// Ranker checkpoint (defaults to <out>/ranker.json)
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Patterns must score strictly above this
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    #[arg(long = "top-percent", global = true)]
    pub top_percent: Option<f64>,
    /// Embedding width
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// Self-attention blocks in the encoder
    #[arg(long, global = true)]
    pub layers: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Add word-order encodings to the embeddings
    #[arg(long, global = true)]
    pub positional: Option<bool>,
    /// Sample size per relation for sample-annotations
    #[arg(long = "per-relation", global = true)]
    pub per_relation: Option<usize>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| invalid(format!("config: bad value {value:?} for `{key}`")))
}

impl PipelineConfig {
    /// Applies `key=value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str, base: &Path) -> Result<(), CliError> {
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_relative() {
                base.join(p)
            } else {
                p
            }
        };
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(invalid(format!(
                    "config line {}: expected key=value",
                    lineno + 1
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "corpus" => self.corpus = Some(path(value)),
                "seed-kb" => self.seed_kb = Some(path(value)),
                "out" => self.out = path(value),
                "annotations" => self.annotations = Some(path(value)),
                "checkpoint" => self.checkpoint = Some(path(value)),
                "threshold" => self.threshold = parse_value(key, value)?,
                "top-percent" => self.top_percent = parse_value(key, value)?,
                "dim" => self.dim = parse_value(key, value)?,
                "layers" => self.layers = parse_value(key, value)?,
                "lr" => self.lr = parse_value(key, value)?,
                "epochs" => self.epochs = parse_value(key, value)?,
                "seed" => self.seed = parse_value(key, value)?,
                "positional" => self.positional = parse_value(key, value)?,
                "per-relation" => self.per_relation = parse_value(key, value)?,
                "workers" => self.workers = parse_value(key, value)?,
                other => {
                    return Err(invalid(format!(
                        "config line {}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(())
    }

    /// Defaults, then the config file (if any), then flags.
    pub fn resolve(flags: &Overrides) -> Result<Self, CliError> {
        let mut config = PipelineConfig::default();
        if let Some(path) = &flags.config {
            let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.clone(), e))?;
            let base = path.parent().unwrap_or(Path::new("."));
            config.apply_text(&text, base)?;
        }
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = &flags.$field {
                    config.$field = v.clone().into();
                }
            )*};
        }
        take!(
            corpus,
            seed_kb,
            annotations,
            checkpoint,
            out,
            threshold,
            top_percent,
            dim,
            layers,
            lr,
            epochs,
            seed,
            positional,
            per_relation,
            workers
        );
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.threshold.is_finite() && (0.0..1.0).contains(&self.threshold)) {
            return Err(invalid("threshold must lie in [0, 1)"));
        }
        if !(self.top_percent > 0.0 && self.top_percent <= 100.0) {
            return Err(invalid("top-percent must lie in (0, 100]"));
        }
        if self.workers == 0 {
            return Err(invalid("workers must be positive"));
        }
        if self.per_relation == 0 {
            return Err(invalid("per-relation must be positive"));
        }
        self.ranker_config().validate()?;
        Ok(())
    }

    pub fn ranker_config(&self) -> RankerConfig {
        RankerConfig {
            embed_dim: self.dim,
            encoder_layers: self.layers,
            learning_rate: self.lr,
            epochs: self.epochs,
            rng_seed: self.seed,
            positional: self.positional,
            ..RankerConfig::default()
        }
    }

    pub fn corpus_path(&self) -> Result<&Path, CliError> {
        self.corpus
            .as_deref()
            .ok_or_else(|| invalid("no corpus given (--corpus or `corpus=`)"))
    }

    pub fn seed_kb_path(&self) -> Result<&Path, CliError> {
        self.seed_kb
            .as_deref()
            .ok_or_else(|| invalid("no seed knowledge given (--seed-kb or `seed-kb=`)"))
    }

    pub fn annotations_path(&self) -> Result<&Path, CliError> {
        self.annotations
            .as_deref()
            .ok_or_else(|| invalid("no annotations given (--annotations or `annotations=`)"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join("ranker.json"))
    }

    pub fn stage_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}
