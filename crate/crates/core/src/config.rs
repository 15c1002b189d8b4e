//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored; unknown keys are rejected.
//! `dump` writes every key, so a dumped file reproduces the run exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::SplitSpec;
use crate::error::{Error, Result};
use crate::nn::SgdConfig;
use crate::shadow::{Objective, StepDecay, TrainConfig};
use crate::solvers::AdshConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Srh,
    Dsh,
    Cauchy,
    Adsh,
    Cnnh,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Srh => "srh",
            Method::Dsh => "dsh",
            Method::Cauchy => "cauchy",
            Method::Adsh => "adsh",
            Method::Cnnh => "cnnh",
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "srh" => Method::Srh,
            "dsh" => Method::Dsh,
            "cauchy" => Method::Cauchy,
            "adsh" => Method::Adsh,
            "cnnh" => Method::Cnnh,
            _ => return Err(Error::Config(format!("unknown method {s:?} (srh, dsh, cauchy, adsh, cnnh)"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Full,
    Desk,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Full => "full",
            Preset::Desk => "desk",
        }
    }

    pub fn spec(self) -> SplitSpec {
        match self {
            Preset::Full => SplitSpec::FULL,
            Preset::Desk => SplitSpec::DESK,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            _ => Err(Error::Config(format!("unknown preset {s:?} (full, desk)"))),
        }
    }
}

/// Where images come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    /// Directory holding the CIFAR-10 binary batches; train and test parts
    /// are concatenated in that order.
    Cifar(PathBuf),
    /// Ten procedurally generated texture classes, `per_class` images each.
    Synthetic { per_class: usize, noise: f64 },
}

impl DataSource {
    fn render(&self) -> String {
        match self {
            DataSource::Cifar(p) => p.display().to_string(),
            DataSource::Synthetic { per_class, noise } => format!("synthetic:{per_class}:{noise}"),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s.strip_prefix("synthetic") {
            Some(rest) => {
                let mut parts = rest.trim_start_matches(':').split(':').filter(|p| !p.is_empty());
                let per_class = parts.next().map(|p| parse_num("dataset", p)).transpose()?.unwrap_or(520);
                let noise = parts.next().map(|p| parse_num("dataset", p)).transpose()?.unwrap_or(0.3);
                Ok(DataSource::Synthetic { per_class, noise })
            }
            None if s.is_empty() => Err(Error::Config("dataset path is empty".into())),
            None => Ok(DataSource::Cifar(PathBuf::from(s))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub bits: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Cauchy scale for `cauchy`, asymmetric weight for `adsh`.
    pub gamma: f64,
    /// Defaults to `2 * bits` when absent.
    pub margin: Option<f64>,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub seed: u64,
    pub dataset: Option<DataSource>,
    pub preset: Preset,
    pub n_query: Option<usize>,
    pub n_database: Option<usize>,
    pub n_train: Option<usize>,
    /// mAP cutoff; `None` ranks the full database.
    pub map_at: Option<usize>,
    /// ADSH inner epochs per alternation.
    pub inner_epochs: usize,
    /// CNNH sweeps over H.
    pub sweeps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::Srh,
            bits: 12,
            alpha: 0.01,
            beta: 0.01,
            gamma: 200.0,
            margin: None,
            epochs: 150,
            batch: 160,
            lr: 1e-3,
            momentum: 0.9,
            weight_decay: 0.004,
            lr_decay_every: 0,
            lr_decay_factor: 0.1,
            seed: 0,
            dataset: None,
            preset: Preset::Full,
            n_query: None,
            n_database: None,
            n_train: None,
            map_at: None,
            inner_epochs: 3,
            sweeps: 20,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_opt<T: FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v == "none" || v.is_empty() {
        Ok(None)
    } else {
        parse_num(key, v).map(Some)
    }
}

fn render_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "method",
        "k",
        "alpha",
        "beta",
        "gamma",
        "margin",
        "epochs",
        "batch",
        "lr",
        "momentum",
        "weight_decay",
        "lr_decay_every",
        "lr_decay_factor",
        "seed",
        "dataset",
        "preset",
        "n_query",
        "n_database",
        "n_train",
        "map_at",
        "inner_epochs",
        "sweeps",
    ];

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "method" => self.method = v.parse()?,
            "k" => self.bits = parse_num(key, v)?,
            "alpha" => self.alpha = parse_num(key, v)?,
            "beta" => self.beta = parse_num(key, v)?,
            "gamma" => self.gamma = parse_num(key, v)?,
            "margin" => self.margin = parse_opt(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "batch" => self.batch = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "momentum" => self.momentum = parse_num(key, v)?,
            "weight_decay" => self.weight_decay = parse_num(key, v)?,
            "lr_decay_every" => self.lr_decay_every = parse_num(key, v)?,
            "lr_decay_factor" => self.lr_decay_factor = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "dataset" => {
                self.dataset = if v == "none" { None } else { Some(DataSource::parse(v)?) }
            }
            "preset" => self.preset = v.parse()?,
            "n_query" => self.n_query = parse_opt(key, v)?,
            "n_database" => self.n_database = parse_opt(key, v)?,
            "n_train" => self.n_train = parse_opt(key, v)?,
            "map_at" => self.map_at = parse_opt(key, v)?,
            "inner_epochs" => self.inner_epochs = parse_num(key, v)?,
            "sweeps" => self.sweeps = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Applies the assignments in `text` on top of `self`.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn dump(&self) -> String {
        let mut out = String::new();
        for &key in Self::KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key));
        }
        out
    }

    fn get(&self, key: &str) -> String {
        match key {
            "method" => self.method.as_str().into(),
            "k" => self.bits.to_string(),
            "alpha" => self.alpha.to_string(),
            "beta" => self.beta.to_string(),
            "gamma" => self.gamma.to_string(),
            "margin" => render_opt(&self.margin),
            "epochs" => self.epochs.to_string(),
            "batch" => self.batch.to_string(),
            "lr" => self.lr.to_string(),
            "momentum" => self.momentum.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "lr_decay_every" => self.lr_decay_every.to_string(),
            "lr_decay_factor" => self.lr_decay_factor.to_string(),
            "seed" => self.seed.to_string(),
            "dataset" => self.dataset.as_ref().map_or_else(|| "none".into(), DataSource::render),
            "preset" => self.preset.as_str().into(),
            "n_query" => render_opt(&self.n_query),
            "n_database" => render_opt(&self.n_database),
            "n_train" => render_opt(&self.n_train),
            "map_at" => render_opt(&self.map_at),
            "inner_epochs" => self.inner_epochs.to_string(),
            "sweeps" => self.sweeps.to_string(),
            _ => unreachable!("key list and getter agree"),
        }
    }

    pub fn margin(&self) -> f64 {
        self.margin.unwrap_or(2.0 * self.bits as f64)
    }

    pub fn split_spec(&self) -> SplitSpec {
        let base = self.preset.spec();
        SplitSpec {
            n_query: self.n_query.unwrap_or(base.n_query),
            n_database: self.n_database.or(base.n_database),
            n_train: self.n_train.unwrap_or(base.n_train),
        }
    }

    fn sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }

    /// Trainer settings for the pairwise methods.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let objective = match self.method {
            Method::Srh => Objective::Srh {
                alpha: self.alpha,
                beta: self.beta,
                margin: self.margin(),
            },
            Method::Dsh => Objective::Dsh {
                alpha: self.alpha,
                margin: self.margin(),
            },
            Method::Cauchy => Objective::Cauchy { gamma: self.gamma },
            m => {
                return Err(Error::Config(format!(
                    "method {} is not trained by the pairwise trainer",
                    m.as_str()
                )))
            }
        };
        let cfg = TrainConfig {
            bits: self.bits,
            epochs: self.epochs,
            batch_size: self.batch,
            objective,
            sgd: self.sgd(),
            lr_decay: (self.lr_decay_every > 0).then_some(StepDecay {
                every: self.lr_decay_every,
                factor: self.lr_decay_factor,
            }),
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn adsh_config(&self) -> Result<AdshConfig> {
        let cfg = AdshConfig {
            bits: self.bits,
            gamma: self.gamma,
            outer_iterations: self.epochs,
            epochs_per_iteration: self.inner_epochs,
            batch_size: self.batch,
            sgd: self.sgd(),
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
