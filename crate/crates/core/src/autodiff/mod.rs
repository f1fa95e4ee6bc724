//! Reverse-mode automatic differentiation over a small operator set:
//! convolution, batch norm, rectifier, residual add, axis mean, linear,
//! lookup, LSTM building blocks and the three losses.

mod checkpoint;
mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{Archive, FORMAT_VERSION, MAGIC};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use graph::{BnUpdate, Gradients, Graph, NodeId, BN_EPS};
pub use optim::{apply_bn_updates, Adam, BN_MOMENTUM};
pub use params::{he_uniform, uniform, ParamKind, ParamStore, Parameter};
pub use tensor::Tensor;
