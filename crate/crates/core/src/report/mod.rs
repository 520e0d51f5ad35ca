//! Parameter and FLOP tables, activation sparsity, mask bitmaps, weight
//! histograms, trade-off records and the energy estimate.

mod accounting;
mod bitmap;
mod energy;
mod histogram;
mod tradeoff;

pub use accounting::{
    count_flops, count_layers, count_params, format_k, input_act_pct, layer_stats, measure_act_pct,
    pruned_flop_pct, LayerCount, LayerStats, StatsTable,
};
pub use bitmap::{banding_ratio, sparsity_bitmap, sparsity_pgm};
pub use energy::{estimate_energy, EnergyEstimate, EnergyModel, Storage};
pub use histogram::{live_within, weight_histogram, Histogram};
pub use tradeoff::{tradeoff_csv, TradeoffPoint};
