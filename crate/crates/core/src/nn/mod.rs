//! Minimal deterministic neural-network kernels.
//!
//! Tensors are row-major `f32` buffers. Images are laid out height x width x
//! channels, convolution kernels `k x k x in x out`, dense weights
//! `out x in`. Reductions accumulate in `f64`.

mod container;
mod error;
pub mod init;
pub mod layer;
pub mod ops;
mod tensor;

pub use container::{ContainerError, WeightFile, CONTAINER_MAGIC, CONTAINER_VERSION};
pub use error::NnError;
pub use layer::{Layer, LayerSpec, Sequential, Trace};
pub use ops::{
    conv2d_forward, dense_forward, maxpool2x2_forward, relu_forward, resize_image, sgd_step,
    softmax, softmax_cross_entropy,
};
pub use tensor::Tensor;
