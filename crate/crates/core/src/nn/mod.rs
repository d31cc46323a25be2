//! Minimal CPU tensor engine: NCHW tensors, convolution, batch normalization,
//! pooling and activations with hand-written backward passes, plus Adam.

mod archive;
mod conv;
mod norm;
pub mod ops;
mod optim;
mod param;
mod scalar;
mod tensor;

pub use archive::{export_module, import_module, ArchiveTensor, TensorArchive};
pub use conv::Conv2d;
pub use norm::{BatchNorm2d, BatchNormCache};
pub use optim::{Adam, AdamConfig};
pub use param::{join_name, param_count, zero_grads, Module, Param, ParamVisitor};
pub use scalar::Scalar;
pub use tensor::Tensor;
