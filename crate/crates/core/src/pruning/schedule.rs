use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::network::{evaluate, train_with, Dataset, EpochLog, Model, TrainConfig, TrainOptions};

use super::dropout::adjusted_dropout_rates;
use super::neurons::prune_dead_neurons;
use super::threshold::{compute_threshold, quality_for_fraction};

/// Which layer group is pruned and retrained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FreezePolicy {
    /// Prune and retrain every layer.
    #[default]
    None,
    /// Conv layers fixed; FC layers pruned and retrained.
    FreezeConvRetrainFc,
    /// FC layers fixed; conv layers pruned and retrained.
    FreezeFcRetrainConv,
    /// FC on odd iterations, conv on even ones.
    Alternate,
}

impl FreezePolicy {
    /// Layers that are pruned and updated during `iteration` (1-based).
    pub fn active_layers(&self, model: &Model, iteration: u32) -> Vec<bool> {
        let dense_turn = match self {
            FreezePolicy::None => None,
            FreezePolicy::FreezeConvRetrainFc => Some(true),
            FreezePolicy::FreezeFcRetrainConv => Some(false),
            FreezePolicy::Alternate => Some(iteration % 2 == 1),
        };
        model
            .specs()
            .iter()
            .map(|s| {
                s.kind.is_weighted()
                    && match dense_turn {
                        None => true,
                        Some(true) => s.kind.is_dense(),
                        Some(false) => s.kind.is_conv(),
                    }
            })
            .collect()
    }

    pub fn name(&self) -> &'static str {
        match self {
            FreezePolicy::None => "none",
            FreezePolicy::FreezeConvRetrainFc => "freeze_conv_retrain_fc",
            FreezePolicy::FreezeFcRetrainConv => "freeze_fc_retrain_conv",
            FreezePolicy::Alternate => "alternate",
        }
    }
}

impl fmt::Display for FreezePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FreezePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FreezePolicy::None),
            "freeze_conv_retrain_fc" | "freeze_conv" => Ok(FreezePolicy::FreezeConvRetrainFc),
            "freeze_fc_retrain_conv" | "freeze_fc" => Ok(FreezePolicy::FreezeFcRetrainConv),
            "alternate" => Ok(FreezePolicy::Alternate),
            other => Err(Error::invalid(format!("unknown freeze policy `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PruneConfig {
    /// Quality parameter per weighted layer, in layer order.
    pub quality: Vec<f64>,
    pub iterations: u32,
    /// Quality used in iteration `i` is `quality · growth^(i−1)`.
    pub quality_growth: f64,
    /// When set, each iteration derives every layer's quality from the
    /// magnitude quantile that removes this fraction of its live weights,
    /// overriding `quality` and `quality_growth`.
    pub prune_fraction: Option<Vec<f64>>,
    pub freeze: FreezePolicy,
    pub retrain: TrainConfig,
    pub dropout_adjust: bool,
    /// Stop once the post-retrain error exceeds the starting error by more
    /// than this (absolute fraction, 0.002 = 0.2 percentage points).
    pub tolerance: f64,
}

impl PruneConfig {
    pub fn validate(&self, model: &Model) -> Result<()> {
        let weighted = model.weighted_layers().len();
        if self.quality.len() != weighted {
            return Err(Error::invalid(format!(
                "{} quality values for {weighted} weighted layers",
                self.quality.len()
            )));
        }
        if self.quality.iter().any(|q| !(*q >= 0.0)) {
            return Err(Error::invalid("quality values must be >= 0"));
        }
        if let Some(f) = &self.prune_fraction {
            if f.len() != weighted {
                return Err(Error::invalid(format!(
                    "{} prune fractions for {weighted} weighted layers",
                    f.len()
                )));
            }
            if f.iter().any(|f| !(0.0..1.0).contains(f)) {
                return Err(Error::invalid("prune fractions must lie in [0, 1)"));
            }
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be positive"));
        }
        if !(self.quality_growth >= 1.0) {
            return Err(Error::invalid("quality_growth must be >= 1"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::invalid("tolerance must be >= 0"));
        }
        self.retrain.validate()
    }

    /// Retraining config derived from a baseline: same schedule and decay at
    /// one tenth of the learning rate.
    pub fn retrain_from(baseline: &TrainConfig, epochs: u32) -> TrainConfig {
        TrainConfig {
            epochs,
            lr: baseline.lr / 10.0,
            ..baseline.clone()
        }
    }
}

/// One row of the pruning log.
#[derive(Clone, Debug, PartialEq)]
pub struct PruneRow {
    pub iteration: u32,
    pub layer: String,
    pub threshold: f64,
    pub weights_total: usize,
    pub weights_remaining: usize,
    pub error_after_retrain: f64,
}

impl PruneRow {
    pub fn remaining_pct(&self) -> f64 {
        100.0 * self.weights_remaining as f64 / self.weights_total as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PruneRecord {
    pub baseline_error: f64,
    pub rows: Vec<PruneRow>,
    /// Iteration whose result was rejected by the tolerance rule, with its
    /// error. The returned model is the one before it.
    pub rejected: Option<(u32, f64)>,
}

impl PruneRecord {
    pub const CSV_HEADER: &'static str =
        "iteration,layer,threshold,weights_total,weights_remaining,remaining_pct,error_after_retrain";

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.iteration,
                r.layer,
                r.threshold,
                r.weights_total,
                r.weights_remaining,
                r.remaining_pct(),
                r.error_after_retrain
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn iterations(&self) -> u32 {
        self.rows.last().map_or(0, |r| r.iteration)
    }
}

/// Thresholds applied by one prune step, per layer (NaN where untouched).
pub type Thresholds = Vec<f64>;

/// Prunes every active layer at `q · std`, then removes dead neurons. `q` is
/// `quality · growth^(iteration−1)`, or derived from `prune_fraction`.
pub fn prune_step(model: &mut Model, cfg: &PruneConfig, iteration: u32) -> Result<Thresholds> {
    cfg.validate(model)?;
    let active = cfg.freeze.active_layers(model, iteration);
    let growth = cfg.quality_growth.powi(iteration as i32 - 1);
    let mut thresholds = vec![f64::NAN; model.specs().len()];
    for (k, layer) in model.weighted_layers().into_iter().enumerate() {
        if !active[layer] {
            continue;
        }
        let p = model.param(layer).expect("weighted");
        if p.live_count() == 0 {
            continue;
        }
        let q = match &cfg.prune_fraction {
            Some(f) => quality_for_fraction(p, f[k])?,
            None => cfg.quality[k] * growth,
        };
        let t = compute_threshold(p, q)?;
        model.param_mut(layer).expect("weighted").prune_below(t);
        thresholds[layer] = t;
    }
    prune_dead_neurons(model);
    Ok(thresholds)
}

/// Masked retraining. Only `active` layers (weights and biases) are updated;
/// with `dropout_adjust` the dropout rates are rescaled to the current
/// connection counts.
pub fn retrain(
    model: Model,
    data: &Dataset,
    cfg: &TrainConfig,
    active: &[bool],
    dropout_adjust: bool,
) -> Result<(Model, Vec<EpochLog>)> {
    if active.len() != model.specs().len() {
        return Err(Error::invalid("one freeze flag per layer required"));
    }
    let dropout = if dropout_adjust {
        adjusted_dropout_rates(&model)?
    } else {
        model.dropout_rates()
    };
    let opts = TrainOptions {
        trainable: active.to_vec(),
        dropout,
    };
    train_with(model, data, cfg, &opts)
}

/// Repeated prune → retrain rounds. Each round's error on `eval` is compared
/// with the starting error; the first round that exceeds the tolerance is
/// discarded and the previous model returned.
pub fn iterate_prune(
    model: Model,
    train: &Dataset,
    eval: &Dataset,
    cfg: &PruneConfig,
) -> Result<(Model, PruneRecord)> {
    cfg.validate(&model)?;
    let baseline_error = evaluate(&model, eval)?;
    let mut record = PruneRecord {
        baseline_error,
        ..Default::default()
    };
    let mut current = model;
    for it in 1..=cfg.iterations {
        let mut candidate = current.clone();
        let thresholds = prune_step(&mut candidate, cfg, it)?;
        let active = cfg.freeze.active_layers(&candidate, it);
        let retrain_cfg = TrainConfig {
            seed: cfg.retrain.seed.wrapping_add(it as u64 - 1),
            ..cfg.retrain.clone()
        };
        let (candidate, _) = retrain(candidate, train, &retrain_cfg, &active, cfg.dropout_adjust)?;
        let err = evaluate(&candidate, eval)?;
        if err > baseline_error + cfg.tolerance {
            record.rejected = Some((it, err));
            break;
        }
        for layer in candidate.weighted_layers() {
            let p = candidate.param(layer).expect("weighted");
            record.rows.push(PruneRow {
                iteration: it,
                layer: candidate.specs()[layer].name.clone(),
                threshold: thresholds[layer],
                weights_total: p.total(),
                weights_remaining: p.live_count(),
                error_after_retrain: err,
            });
        }
        current = candidate;
    }
    Ok((current, record))
}
