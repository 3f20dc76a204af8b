//! The completion network: layer table, tensors, forward/backward passes
//! and checkpoints.

mod checkpoint;
pub(crate) mod conv;
mod model;
mod spec;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, TensorEntry};
pub use model::{
    assemble_input, images_to_tensor, tensor_to_images, BatchNorm, ForwardCache, Gradients, LayerGrads, LayerParams,
    Mode, Model, BN_EPSILON, BN_MOMENTUM,
};
pub use spec::{Activation, LayerKind, LayerSpec, ModelSpec, Stride};
pub use tensor::Tensor;
