//! Minimal trainable neural substrate.

pub mod checkpoint;
pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod store;
pub mod tensor;

pub use layer::{Layer, LayerSpec, Mode, Sequential};
pub use loss::{cross_entropy, cross_entropy_batch, softmax};
pub use store::{AdamConfig, ParamId, ParamStore};
pub use tensor::Tensor;
