//! Layers, network composition and exact gradients.

mod batchnorm;
mod conv;
mod dense;
mod dropout;
mod gru;
pub mod linalg;
mod network;
mod pool;
mod spec;
mod visualize;

pub use batchnorm::{batch_norm_forward, BatchNormParams, BnMode, BN_EPSILON, BN_MOMENTUM};
pub use conv::{conv2d_same_forward, ConvParams};
pub use dense::{dense_forward, Activation, DenseParams};
pub use dropout::dropout_mask;
pub use gru::{gru_forward, GruParams};
pub use network::{Gradients, Mode, NamedTensor, Network};
pub use pool::{freq_max_pool, stack_maps, temporal_max_pool, unstack_maps};
pub use spec::{LayerSpec, NetworkSpec};
pub use visualize::{input_gradient_ascent, AscentResult, ASCENT_STEPS, ASCENT_STEP_SIZE};
