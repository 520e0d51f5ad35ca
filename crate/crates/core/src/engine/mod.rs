//! Dense tensor math, deterministic RNG and the gradient primitives used by
//! the rest of the crate.
//!
//! All kernels are single-threaded and accumulate in `f64` in a fixed order,
//! so results are reproducible bit-for-bit across runs.

mod activation;
pub(crate) mod conv;
pub(crate) mod linalg;
mod optim;
mod rng;
mod tensor;

pub(crate) use activation::{
    dropout_backward_inplace, dropout_inplace, relu_backward_inplace, relu_inplace,
};
pub use activation::{dropout_forward, relu, relu_grad, softmax_cross_entropy};
pub use conv::{conv2d_forward, ConvGeometry, PoolGeometry};
pub use linalg::matmul;
pub(crate) use optim::sgd_update;
pub use optim::{sgd_step, DecayMode};
pub use rng::Rng;
pub(crate) use tensor::transpose_into;
pub use tensor::Tensor;
