//! Layer and model definitions, MNIST ingestion, baseline training and
//! evaluation.

mod data;
mod model;
mod spec;
mod train;

pub use data::{
    dataset_from_idx, load_mnist_idx, parse_idx_images, parse_idx_labels, to_idx, Dataset,
    IMAGE_MAGIC, LABEL_MAGIC,
};
pub use model::{ActivationRecord, LayerTrace, Mode, Model, ParamGrad, TrainState};
pub use spec::{Architecture, InputShape, LayerKind, LayerSpec};
pub use train::{evaluate, predict_classes, train, EpochLog, LrSchedule, TrainConfig};
pub(crate) use train::{train_with, TrainOptions};

/// Initializes a built-in architecture.
pub fn init_model(arch: Architecture, seed: u64) -> crate::Result<Model> {
    Model::init(arch.input(), arch.specs(), seed)
}
