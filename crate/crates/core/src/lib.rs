//! 1-D deformable convolution with hand-written forward and backward passes,
//! a Deformer convolution block with a small training harness, and analysis
//! tools for learned offsets and attention maps.
//!
//! Every numeric routine is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the bottom of this file name the two concrete instantiations.

pub mod analysis;
pub mod block;
pub mod deformconv;
pub mod error;
pub mod gradcheck;
pub mod optim;
pub mod param;
pub mod scalar;
pub mod tensor;
pub mod toy;
pub mod train;

pub use block::{BlockConfig, DeformerBlock, DepthwiseMode, InitScheme, Mode};
pub use deformconv::{
    conv1d_backward, conv1d_forward, deformable_backward, deformable_forward, interpolate,
    Boundary, DeformConfig, DeformableConvLayer, KernelGeometry, OffsetField,
};
pub use error::{Error, Result};
pub use optim::{AdamConfig, OptimizerState};
pub use param::Parameter;
pub use scalar::Scalar;
pub use tensor::{read_any, read_tensor, write_tensor, AnyTensor, DType, Tensor};
pub use toy::ToyTask;
pub use train::{train_toy, ToyConfig, TrainReport};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type DeformableConvLayer32 = DeformableConvLayer<f32>;
pub type DeformableConvLayer64 = DeformableConvLayer<f64>;
pub type OffsetField32 = OffsetField<f32>;
pub type OffsetField64 = OffsetField<f64>;
pub type DeformerBlock32 = DeformerBlock<f32>;
pub type DeformerBlock64 = DeformerBlock<f64>;
