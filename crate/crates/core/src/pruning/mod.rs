//! Masks, magnitude thresholds, masked retraining, dropout adjustment, layer
//! freezing, iterative schedules and dead-neuron removal.

mod dropout;
mod masked;
mod neurons;
mod schedule;
mod threshold;

pub use dropout::{adjust_dropout, adjusted_dropout_rates};
pub use masked::MaskedParam;
pub use neurons::prune_dead_neurons;
pub use schedule::{
    iterate_prune, prune_step, retrain, FreezePolicy, PruneConfig, PruneRecord, PruneRow,
    Thresholds,
};
pub(crate) use threshold::mask_gradient;
pub use threshold::{compute_threshold, layer_std, masked_grad, prune_layer, quality_for_fraction};

use crate::network::Model;

/// Masks the `ceil(fraction · n)` smallest-magnitude live weights of one
/// layer, where `n` is its live count. Ties go to the lower flat index.
/// Returns the number removed.
pub fn prune_fraction_by_rank(model: &mut Model, layer: usize, fraction: f64) -> usize {
    let p = model.param(layer).expect("weighted layer");
    let mut live: Vec<(f32, usize)> = (0..p.total())
        .filter(|&i| p.is_live(i))
        .map(|i| (p.weights().data()[i].abs(), i))
        .collect();
    let k = ((fraction * live.len() as f64).ceil() as usize).min(live.len());
    live.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let victims: Vec<usize> = live[..k].iter().map(|&(_, i)| i).collect();
    model.param_mut(layer).expect("weighted").remove(victims)
}

/// Global variant: ranks live weights of all weighted layers together.
pub fn prune_global_by_rank(model: &mut Model, fraction: f64) -> usize {
    let mut live: Vec<(f32, usize, usize)> = Vec::new();
    for layer in model.weighted_layers() {
        let p = model.param(layer).expect("weighted");
        for i in 0..p.total() {
            if p.is_live(i) {
                live.push((p.weights().data()[i].abs(), layer, i));
            }
        }
    }
    let k = ((fraction * live.len() as f64).ceil() as usize).min(live.len());
    live.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut removed = 0;
    for layer in model.weighted_layers() {
        let victims: Vec<usize> = live[..k]
            .iter()
            .filter(|v| v.1 == layer)
            .map(|v| v.2)
            .collect();
        removed += model.param_mut(layer).expect("weighted").remove(victims);
    }
    removed
}
