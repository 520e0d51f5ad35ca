//! Removal of hidden units that can no longer influence the output.
//!
//! A hidden unit is dead when every outgoing connection is masked, or when
//! every incoming connection is masked and its constant output
//! (`act(bias)`) is exactly zero. A unit with no inputs but a positive
//! post-activation bias feeds a constant downstream and is kept, since
//! removing it would change the network function.

use std::ops::Range;

use crate::network::{LayerKind, Model};

/// Flat weight indices of `layer` that feed unit `unit`.
fn incoming(model: &Model, layer: usize, unit: usize) -> Vec<usize> {
    match model.specs()[layer].kind {
        LayerKind::Dense { fan_in, fan_out } => (0..fan_in).map(|k| k * fan_out + unit).collect(),
        LayerKind::Conv {
            in_channels,
            kernel,
            ..
        } => {
            let patch = in_channels * kernel * kernel;
            (unit * patch..(unit + 1) * patch).collect()
        }
        LayerKind::MaxPool { .. } => Vec::new(),
    }
}

/// Flat weight indices of `next` that read unit `unit` of `layer`.
fn outgoing(model: &Model, layer: usize, next: usize, unit: usize) -> Vec<usize> {
    let units = model.specs()[layer].kind.units();
    match model.specs()[next].kind {
        LayerKind::Dense { fan_out, .. } => {
            let plane = model.input_len_of(next) / units;
            let rows: Range<usize> = unit * plane..(unit + 1) * plane;
            rows.flat_map(|r| r * fan_out..(r + 1) * fan_out).collect()
        }
        LayerKind::Conv {
            in_channels,
            filters,
            kernel,
            ..
        } => {
            let kk = kernel * kernel;
            (0..filters)
                .flat_map(|f| {
                    let start = (f * in_channels + unit) * kk;
                    start..start + kk
                })
                .collect()
        }
        LayerKind::MaxPool { .. } => Vec::new(),
    }
}

/// Iterates to a fixpoint, masking all connections of dead hidden units and
/// zeroing their biases. Output units and input pixels are never removed.
/// Returns the number of units removed per layer (aligned with the specs).
#[allow(clippy::needless_range_loop)]
pub fn prune_dead_neurons(model: &mut Model) -> Vec<usize> {
    let n_layers = model.specs().len();
    let mut removed = vec![0usize; n_layers];
    let mut gone: Vec<Vec<bool>> = model
        .specs()
        .iter()
        .map(|s| vec![false; s.kind.units()])
        .collect();
    loop {
        let mut changed = false;
        for layer in model.weighted_layers() {
            let Some(next) = model.next_weighted(layer) else {
                continue;
            };
            let relu = model.specs()[layer].relu;
            for unit in 0..model.specs()[layer].kind.units() {
                if gone[layer][unit] {
                    continue;
                }
                let inc = incoming(model, layer, unit);
                let out = outgoing(model, layer, next, unit);
                let p = model.param(layer).expect("weighted");
                let q = model.param(next).expect("weighted");
                let in_live = inc.iter().any(|&i| p.is_live(i));
                let out_live = out.iter().any(|&i| q.is_live(i));
                let bias = p.bias().data()[unit];
                let constant = if relu { bias.max(0.0) } else { bias };
                let dead = !out_live || (!in_live && constant == 0.0);
                if !dead {
                    continue;
                }
                gone[layer][unit] = true;
                if !in_live && !out_live && bias == 0.0 {
                    // removed earlier
                    continue;
                }
                removed[layer] += 1;
                changed = true;
                let p = model.param_mut(layer).expect("weighted");
                p.remove(inc);
                p.bias_mut()[unit] = 0.0;
                model.param_mut(next).expect("weighted").remove(out);
            }
        }
        if !changed {
            return removed;
        }
    }
}
