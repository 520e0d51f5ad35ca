//! Run configuration: a flat `key = value` file with `[section]` headers.
//! Every key can also be given on the command line as `--section-key`
//! (top-level keys as `--key`); flags win over the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use prunenet::network::{Architecture, LrSchedule};
use prunenet::{DecayMode, PruneConfig, TrainConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Syntax {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("`{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("path does not exist: {0}")]
    MissingPath(PathBuf),
}

type Result<T> = std::result::Result<T, ConfigError>;

/// `(section, key, help)`. The empty section holds top-level keys.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("", "arch", "architecture preset: lenet-300-100 or lenet-5"),
    ("", "seed", "seed for initialization, shuffling and dropout"),
    ("", "out_dir", "directory receiving all artifacts"),
    ("data", "dir", "directory holding the MNIST IDX files"),
    ("data", "train_images", "training images file name"),
    ("data", "train_labels", "training labels file name"),
    ("data", "test_images", "test images file name"),
    ("data", "test_labels", "test labels file name"),
    (
        "data",
        "validation",
        "training samples held out for validation",
    ),
    ("data", "validation_seed", "seed of the validation split"),
    (
        "data",
        "train_limit",
        "use only the first N remaining training samples (0 = all)",
    ),
    ("train", "epochs", "training epochs"),
    ("train", "batch_size", "minibatch size"),
    ("train", "lr", "learning rate"),
    ("train", "lr_schedule", "fixed or step"),
    ("train", "lr_decay", "step schedule multiplier"),
    ("train", "lr_decay_every", "step schedule period in epochs"),
    ("train", "decay", "weight decay kind: none, l1 or l2"),
    ("train", "decay_coef", "weight decay coefficient"),
    ("train", "dropout", "dropout rate after hidden dense layers"),
    (
        "prune",
        "quality",
        "comma-separated quality per weighted layer, or one for all",
    ),
    (
        "prune",
        "quality_growth",
        "per-iteration quality multiplier",
    ),
    (
        "prune",
        "prune_fraction",
        "comma-separated fraction of live weights removed per iteration, or one for all",
    ),
    ("prune", "iterations", "prune/retrain rounds"),
    (
        "prune",
        "freeze",
        "none, freeze_conv_retrain_fc, freeze_fc_retrain_conv or alternate",
    ),
    (
        "prune",
        "dropout_adjust",
        "rescale dropout to the remaining connections",
    ),
    (
        "prune",
        "tolerance",
        "allowed validation error increase (fraction)",
    ),
    ("prune", "retrain_epochs", "epochs per retraining round"),
    (
        "prune",
        "retrain_lr",
        "retraining learning rate (default: train lr / 10)",
    ),
    (
        "export",
        "index_bits",
        "override the index width of every layer",
    ),
    (
        "sensitivity",
        "fractions",
        "comma-separated pruned fractions",
    ),
    (
        "sensitivity",
        "budget",
        "accuracy drop allowed per layer (fraction)",
    ),
    ("sensitivity", "eval", "validation or test"),
    (
        "report",
        "act_samples",
        "samples used to measure activation density",
    ),
    ("report", "histogram_bins", "bins of the weight histograms"),
    (
        "tradeoff",
        "fractions",
        "comma-separated global pruned fractions",
    ),
    (
        "tradeoff",
        "l1_coef",
        "L1 coefficient of the L1-trained baseline",
    ),
    (
        "tradeoff",
        "retrain_epochs",
        "epochs of retraining per point",
    ),
    ("tradeoff", "eval", "validation or test"),
];

/// Flag name for a key: `train.lr` → `train-lr`, `out_dir` → `out-dir`.
pub fn flag_name(section: &str, key: &str) -> String {
    let k = key.replace('_', "-");
    if section.is_empty() {
        k
    } else {
        format!("{section}-{k}")
    }
}

pub fn full_key(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

/// Raw values keyed by `section.key`, with the directory used to resolve
/// relative paths from the file.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    base: BTreeMap<String, PathBuf>,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(s, k, _)| full_key(s, k) == key)
}

impl RawConfig {
    pub fn parse(text: &str, origin: &str, base: &Path) -> Result<RawConfig> {
        let mut cfg = RawConfig::default();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| ConfigError::Syntax {
                path: origin.to_string(),
                line: n + 1,
                msg: msg.to_string(),
            };
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err("unterminated section header"))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`"))?;
            let key = full_key(&section, k.trim());
            if !known(&key) {
                return Err(err(&format!("unknown key `{key}`")));
            }
            if cfg.values.contains_key(&key) {
                return Err(err(&format!("duplicate key `{key}`")));
            }
            cfg.values.insert(key.clone(), v.trim().to_string());
            cfg.base.insert(key, base.to_path_buf());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RawConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        RawConfig::parse(&text, &path.display().to_string(), &base)
    }

    /// Sets a value from the command line; relative paths resolve against
    /// the working directory.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !known(key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.values.insert(key.to_string(), value.to_string());
        self.base.insert(key.to_string(), PathBuf::from("."));
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|e: T::Err| ConfigError::Value {
                    key: key.to_string(),
                    msg: format!("`{v}`: {e}"),
                })
            })
            .transpose()
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim().parse::<f64>().map_err(|e| ConfigError::Value {
                            key: key.to_string(),
                            msg: format!("`{s}`: {e}"),
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                self.base[key].join(p)
            }
        })
    }

    fn bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "yes" | "on" | "1") => Ok(true),
            Some("false" | "no" | "off" | "0") => Ok(false),
            Some(v) => Err(ConfigError::Value {
                key: key.to_string(),
                msg: format!("`{v}` is not a boolean"),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub dir: PathBuf,
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
    pub validation: usize,
    pub validation_seed: u64,
    pub train_limit: usize,
}

impl DataConfig {
    pub fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Fails with the first missing file.
    pub fn check(&self) -> Result<()> {
        for f in [
            &self.train_images,
            &self.train_labels,
            &self.test_images,
            &self.test_labels,
        ] {
            let p = self.file(f);
            if !p.exists() {
                return Err(ConfigError::MissingPath(p));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityConfig {
    pub fractions: Vec<f64>,
    pub budget: f64,
    pub on_test: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TradeoffConfig {
    pub fractions: Vec<f64>,
    pub l1_coef: f32,
    pub retrain_epochs: u32,
    pub on_test: bool,
}

/// Fully resolved run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub arch: Architecture,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub dropout: f32,
    pub prune: PruneConfig,
    pub index_bits: Option<u8>,
    pub sensitivity: SensitivityConfig,
    pub act_samples: usize,
    pub histogram_bins: usize,
    pub tradeoff: TradeoffConfig,
}

fn value_err(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn eval_set(raw: &RawConfig, key: &str, default: bool) -> Result<bool> {
    match raw.get(key) {
        None => Ok(default),
        Some("test") => Ok(true),
        Some("validation") => Ok(false),
        Some(v) => Err(value_err(
            key,
            format!("`{v}` is neither validation nor test"),
        )),
    }
}

impl RunConfig {
    pub fn resolve(raw: &RawConfig) -> Result<RunConfig> {
        let arch: Architecture = raw
            .get("arch")
            .ok_or_else(|| value_err("arch", "required"))?
            .parse()
            .map_err(|e| value_err("arch", format!("{e}")))?;
        let seed: u64 = raw
            .parsed("seed")?
            .ok_or_else(|| value_err("seed", "required (runs are never seeded from the clock)"))?;
        let out_dir = raw
            .path("out_dir")
            .unwrap_or_else(|| PathBuf::from("runs").join(arch.name()));
        let data = DataConfig {
            dir: raw
                .path("data.dir")
                .unwrap_or_else(|| PathBuf::from("data/mnist")),
            train_images: raw.or("data.train_images", "train-images-idx3-ubyte".to_string())?,
            train_labels: raw.or("data.train_labels", "train-labels-idx1-ubyte".to_string())?,
            test_images: raw.or("data.test_images", "t10k-images-idx3-ubyte".to_string())?,
            test_labels: raw.or("data.test_labels", "t10k-labels-idx1-ubyte".to_string())?,
            validation: raw.or("data.validation", 2000)?,
            validation_seed: raw.or("data.validation_seed", 1)?,
            train_limit: raw.or("data.train_limit", 0)?,
        };

        let d = TrainConfig::default();
        let schedule = match raw.get("train.lr_schedule").unwrap_or("step") {
            "fixed" => LrSchedule::Fixed,
            "step" => {
                let (factor, every) = match d.schedule {
                    LrSchedule::StepDecay { factor, every } => (factor, every),
                    LrSchedule::Fixed => (0.5, 8),
                };
                LrSchedule::StepDecay {
                    factor: raw.or("train.lr_decay", factor)?,
                    every: raw.or("train.lr_decay_every", every)?,
                }
            }
            v => {
                return Err(value_err(
                    "train.lr_schedule",
                    format!("`{v}` is neither fixed nor step"),
                ))
            }
        };
        let coef: f32 = raw.or("train.decay_coef", d.decay.coefficient())?;
        let decay = match raw.get("train.decay").unwrap_or(d.decay.label()) {
            "none" => DecayMode::None,
            "l1" => DecayMode::L1(coef),
            "l2" => DecayMode::L2(coef),
            v => {
                return Err(value_err(
                    "train.decay",
                    format!("`{v}` is not none, l1 or l2"),
                ))
            }
        };
        let train = TrainConfig {
            epochs: raw.or("train.epochs", d.epochs)?,
            batch_size: raw.or("train.batch_size", d.batch_size)?,
            lr: raw.or("train.lr", d.lr)?,
            schedule,
            decay,
            seed,
        };
        train
            .validate()
            .map_err(|e| value_err("train", e.to_string()))?;
        let dropout: f32 = raw.or("train.dropout", Architecture::DEFAULT_DROPOUT)?;
        if !(0.0..1.0).contains(&dropout) {
            return Err(value_err("train.dropout", "must lie in [0, 1)"));
        }

        let weighted = arch.specs().iter().filter(|s| s.kind.is_weighted()).count();
        let retrain_epochs: u32 = raw.or("prune.retrain_epochs", 4)?;
        let mut retrain = PruneConfig::retrain_from(&train, retrain_epochs);
        if let Some(lr) = raw.parsed("prune.retrain_lr")? {
            retrain.lr = lr;
        }
        // A single value applies to every weighted layer.
        let per_layer = |v: Vec<f64>| {
            if v.len() == 1 {
                vec![v[0]; weighted]
            } else {
                v
            }
        };
        let prune = PruneConfig {
            quality: raw
                .list("prune.quality")?
                .map_or_else(|| vec![1.0; weighted], per_layer),
            iterations: raw.or("prune.iterations", 1)?,
            quality_growth: raw.or("prune.quality_growth", 1.0)?,
            prune_fraction: raw.list("prune.prune_fraction")?.map(per_layer),
            freeze: raw
                .get("prune.freeze")
                .unwrap_or("none")
                .parse()
                .map_err(|e| value_err("prune.freeze", format!("{e}")))?,
            retrain,
            dropout_adjust: raw.bool("prune.dropout_adjust", true)?,
            tolerance: raw.or("prune.tolerance", 0.002)?,
        };
        let model = prunenet::Model::init(arch.input(), arch.specs(), 0)
            .map_err(|e| value_err("arch", e.to_string()))?;
        prune
            .validate(&model)
            .map_err(|e| value_err("prune", e.to_string()))?;

        let index_bits: Option<u8> = raw.parsed("export.index_bits")?;
        if index_bits.is_some_and(|b| !(1..=16).contains(&b)) {
            return Err(value_err("export.index_bits", "must lie in 1..=16"));
        }
        let sensitivity = SensitivityConfig {
            fractions: raw
                .list("sensitivity.fractions")?
                .unwrap_or_else(|| prunenet::sensitivity::DEFAULT_FRACTIONS.to_vec()),
            budget: raw.or("sensitivity.budget", 0.002)?,
            on_test: eval_set(raw, "sensitivity.eval", false)?,
        };
        let tradeoff = TradeoffConfig {
            fractions: raw
                .list("tradeoff.fractions")?
                .unwrap_or_else(|| vec![0.5, 0.6, 0.7, 0.8, 0.9]),
            l1_coef: raw.or("tradeoff.l1_coef", 1e-5)?,
            retrain_epochs: raw.or("tradeoff.retrain_epochs", retrain_epochs)?,
            on_test: eval_set(raw, "tradeoff.eval", true)?,
        };
        if tradeoff.fractions.iter().any(|f| !(0.0..1.0).contains(f))
            || tradeoff.fractions.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(value_err(
                "tradeoff.fractions",
                "must increase strictly within [0, 1)",
            ));
        }
        Ok(RunConfig {
            arch,
            seed,
            out_dir,
            data,
            train,
            dropout,
            prune,
            index_bits,
            sensitivity,
            act_samples: raw.or("report.act_samples", 1000)?,
            histogram_bins: raw.or("report.histogram_bins", 100)?,
            tradeoff,
        })
    }
}
