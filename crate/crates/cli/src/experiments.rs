//! Multi-model experiments driven by the `tradeoff` command.

use prunenet::pruning::{prune_global_by_rank, retrain};
use prunenet::report::TradeoffPoint;
use prunenet::{evaluate, Dataset, DecayMode, Model, Result, TrainConfig};

pub const VARIANTS: [&str; 5] = [
    "l1_no_retrain",
    "l2_no_retrain",
    "l1_retrain",
    "l2_retrain",
    "l2_iterative",
];

/// Fraction of all weights that are masked.
pub fn pruned_fraction(model: &Model) -> f64 {
    let (total, live) = model.weight_counts();
    1.0 - live as f64 / total as f64
}

/// Copy of `model` with the smallest weights of the whole network masked
/// until `fraction` of all weights is gone.
pub fn prune_global_to(model: &Model, fraction: f64) -> Model {
    let mut m = model.clone();
    let (total, live) = m.weight_counts();
    let keep = ((1.0 - fraction) * total as f64).round() as usize;
    if live > keep {
        let f = (live - keep) as f64 / live as f64;
        prune_global_by_rank(&mut m, f);
    }
    m
}

/// Retrains every layer with adjusted dropout.
pub fn retrain_all(model: Model, data: &Dataset, cfg: &TrainConfig) -> Result<Model> {
    let active = vec![true; model.specs().len()];
    Ok(retrain(model, data, cfg, &active, true)?.0)
}

pub struct TradeoffSetup<'a> {
    pub l1: &'a Model,
    pub l2: &'a Model,
    pub train: &'a Dataset,
    pub eval: &'a Dataset,
    pub fractions: &'a [f64],
    /// Retraining config; its decay is replaced by each baseline's.
    pub retrain: TrainConfig,
    pub l1_decay: DecayMode,
    pub l2_decay: DecayMode,
}

fn point(variant: &str, model: &Model, base_acc: f64, eval: &Dataset) -> Result<TradeoffPoint> {
    let acc = 1.0 - evaluate(model, eval)?;
    Ok(TradeoffPoint {
        variant: variant.to_string(),
        parameters_pruned_pct: 100.0 * pruned_fraction(model),
        accuracy_delta: 100.0 * (acc - base_acc),
    })
}

/// The five trade-off curves: each baseline pruned with and without
/// retraining, plus iterative pruning of the L2 baseline where each point
/// starts from the previous retrained one.
pub fn tradeoff(s: &TradeoffSetup<'_>) -> Result<Vec<TradeoffPoint>> {
    let acc = |m: &Model| evaluate(m, s.eval).map(|e| 1.0 - e);
    let (acc1, acc2) = (acc(s.l1)?, acc(s.l2)?);
    let cfg1 = TrainConfig {
        decay: s.l1_decay,
        ..s.retrain.clone()
    };
    let cfg2 = TrainConfig {
        decay: s.l2_decay,
        ..s.retrain.clone()
    };
    let mut out = Vec::new();
    let mut iterative = s.l2.clone();
    for &f in s.fractions {
        let p1 = prune_global_to(s.l1, f);
        let p2 = prune_global_to(s.l2, f);
        out.push(point(VARIANTS[0], &p1, acc1, s.eval)?);
        out.push(point(VARIANTS[1], &p2, acc2, s.eval)?);
        out.push(point(
            VARIANTS[2],
            &retrain_all(p1, s.train, &cfg1)?,
            acc1,
            s.eval,
        )?);
        out.push(point(
            VARIANTS[3],
            &retrain_all(p2, s.train, &cfg2)?,
            acc2,
            s.eval,
        )?);
        iterative = retrain_all(prune_global_to(&iterative, f), s.train, &cfg2)?;
        out.push(point(VARIANTS[4], &iterative, acc2, s.eval)?);
    }
    Ok(out)
}
