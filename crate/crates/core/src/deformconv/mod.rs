//! Regular and deformable 1-D convolution.
//!
//! Sequence tensors are `[batch, time, channels]`. Weights are
//! `[out_channels, in_channels / groups, taps]`. Samples outside `[0, T)` read
//! as zero, so a deformable convolution with all-zero offsets computes exactly
//! the zero-padded regular convolution with the same geometry.

mod conv;
mod deform;
mod geometry;
mod interp;
mod layer;

pub use conv::{conv1d_backward, conv1d_forward, ConvGrads};
pub use deform::{deformable_backward, deformable_forward, DeformGrads, OffsetField};
pub use geometry::KernelGeometry;
pub use interp::{interpolate, interpolate_slope, Boundary};
pub use layer::{DeformConfig, DeformableConvLayer, LayerCache};

use crate::error::{contract, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Channel bookkeeping for a grouped convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Grouping {
    pub batch: usize,
    pub time: usize,
    pub channels_in: usize,
    pub channels_out: usize,
    pub groups: usize,
    pub taps: usize,
}

impl Grouping {
    pub fn in_per_group(&self) -> usize {
        self.channels_in / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.channels_out / self.groups
    }

    /// Validates `x: [B,T,F]`, `weights: [N, F/g, K]`, and `bias: [N]`.
    pub fn check<S: Scalar>(
        x: &Tensor<S>,
        weights: &Tensor<S>,
        bias: &Tensor<S>,
        groups: usize,
    ) -> Result<Self> {
        if x.rank() != 3 {
            return Err(contract(format!(
                "input must be [B,T,F], got {:?}",
                x.shape()
            )));
        }
        if weights.rank() != 3 {
            return Err(contract(format!(
                "weights must be [N,F/g,K], got {:?}",
                weights.shape()
            )));
        }
        let (batch, time, channels_in) = (x.dim(0), x.dim(1), x.dim(2));
        let (channels_out, per_group, taps) = (weights.dim(0), weights.dim(1), weights.dim(2));
        if groups == 0 || channels_in % groups != 0 || channels_out % groups != 0 {
            return Err(contract(format!(
                "groups={groups} must divide F={channels_in} and N={channels_out}"
            )));
        }
        if per_group != channels_in / groups {
            return Err(contract(format!(
                "weights expect {per_group} channels per group, input provides {}",
                channels_in / groups
            )));
        }
        if bias.shape() != [channels_out] {
            return Err(contract(format!(
                "bias must be [{channels_out}], got {:?}",
                bias.shape()
            )));
        }
        Ok(Self {
            batch,
            time,
            channels_in,
            channels_out,
            groups,
            taps,
        })
    }
}
