//! Magnitude-based connection pruning for small neural networks.
//!
//! The crate trains LeNet-class networks on MNIST, prunes connections below a
//! per-layer threshold, retrains the survivors under a fixed mask, and stores
//! the result in a compact relative-index format.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
mod error;
pub mod network;
pub mod pruning;
pub mod report;
pub mod sensitivity;
pub mod sparse;

pub use engine::{DecayMode, Rng, Tensor};
pub use error::{Error, Result};
pub use network::{
    evaluate, init_model, train, Architecture, Dataset, InputShape, LayerKind, LayerSpec,
    LrSchedule, Model, TrainConfig,
};
pub use pruning::{FreezePolicy, MaskedParam, PruneConfig, PruneRecord};
pub use sparse::{export_model, import_model, load_checkpoint, save_checkpoint, StorageReport};
