use super::{
    conv1d_backward, conv1d_forward, deformable_backward, deformable_forward, Boundary,
    KernelGeometry, OffsetField,
};
use crate::error::{contract, Result};
use crate::param::Parameter;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Static configuration of a [`DeformableConvLayer`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformConfig {
    pub geometry: KernelGeometry,
    pub channels_in: usize,
    pub channels_out: usize,
    /// Output-convolution groups; depthwise when equal to both channel counts.
    pub conv_groups: usize,
    /// Number of independent offset sets; channels are split evenly among them.
    pub deformable_groups: usize,
    pub boundary: Boundary,
    /// Learning-rate multiplier attached to the offset parameters.
    pub offset_lr_mult: f64,
}

impl DeformConfig {
    /// Same-length depthwise layer over `channels` with one shared offset group.
    pub fn depthwise(channels: usize, kernel_size: usize) -> Result<Self> {
        Ok(Self {
            geometry: KernelGeometry::same(kernel_size, 1)?,
            channels_in: channels,
            channels_out: channels,
            conv_groups: channels,
            deformable_groups: 1,
            boundary: Boundary::Zero,
            offset_lr_mult: 1.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let (f, n, g, gd) = (
            self.channels_in,
            self.channels_out,
            self.conv_groups,
            self.deformable_groups,
        );
        if f == 0 || n == 0 {
            return Err(contract("channel counts must be >= 1"));
        }
        if g == 0 || f % g != 0 || n % g != 0 {
            return Err(contract(format!(
                "conv_groups={g} must divide F={f} and N={n}"
            )));
        }
        if gd == 0 || f % gd != 0 {
            return Err(contract(format!(
                "deformable_groups={gd} must divide F={f}"
            )));
        }
        if self.offset_lr_mult.is_nan() || self.offset_lr_mult <= 0.0 {
            return Err(contract(format!(
                "offset lr multiplier must be positive, got {}",
                self.offset_lr_mult
            )));
        }
        Ok(())
    }
}

/// Deformable 1-D convolution: an offset convolution predicting `Δp` from the
/// input on the rigid grid, followed by the output convolution sampled at `p0 + Δp`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformableConvLayer<S> {
    pub config: DeformConfig,
    /// `[G_d·K, F, K]`
    pub offset_weights: Parameter<S>,
    /// `[G_d·K]`
    pub offset_bias: Parameter<S>,
    /// `[N, F/g, K]`
    pub output_weights: Parameter<S>,
    /// `[N]`
    pub output_bias: Parameter<S>,
}

/// Activations saved by [`DeformableConvLayer::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache<S> {
    pub x: Tensor<S>,
    pub offsets: OffsetField<S>,
}

impl<S: Scalar> DeformableConvLayer<S> {
    /// All parameters start at zero.
    pub fn new(config: DeformConfig) -> Result<Self> {
        config.validate()?;
        let k = config.geometry.kernel_size;
        let (f, n, g, gd) = (
            config.channels_in,
            config.channels_out,
            config.conv_groups,
            config.deformable_groups,
        );
        let mult = S::from_f64_lossy(config.offset_lr_mult);
        let mut offset_weights = Parameter::zeros("offset_weights", &[gd * k, f, k]);
        let mut offset_bias = Parameter::zeros("offset_bias", &[gd * k]);
        offset_weights.lr_mult = mult;
        offset_bias.lr_mult = mult;
        Ok(Self {
            config,
            offset_weights,
            offset_bias,
            output_weights: Parameter::zeros("output_weights", &[n, f / g, k]),
            output_bias: Parameter::zeros("output_bias", &[n]),
        })
    }

    pub fn geometry(&self) -> &KernelGeometry {
        &self.config.geometry
    }

    pub fn set_offset_lr_mult(&mut self, mult: f64) {
        self.config.offset_lr_mult = mult;
        self.offset_weights.lr_mult = S::from_f64_lossy(mult);
        self.offset_bias.lr_mult = S::from_f64_lossy(mult);
    }

    fn check_input(&self, x: &Tensor<S>) -> Result<()> {
        if x.rank() != 3 || x.dim(2) != self.config.channels_in {
            return Err(contract(format!(
                "layer expects [B,T,{}], got {:?}",
                self.config.channels_in,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Runs the offset convolution over the layer geometry and forms `p' = p0 + Δp`.
    pub fn offset_forward(&self, x: &Tensor<S>) -> Result<OffsetField<S>> {
        self.check_input(x)?;
        let raw = conv1d_forward(
            x,
            &self.offset_weights.value,
            &self.offset_bias.value,
            &self.config.geometry,
            1,
        )?;
        let (b, t_out) = (raw.dim(0), raw.dim(1));
        let delta = raw.reshape(&[
            b,
            t_out,
            self.config.deformable_groups,
            self.config.geometry.kernel_size,
        ])?;
        OffsetField::from_delta(delta, &self.config.geometry, x.dim(1))
    }

    /// Output convolution at the deformed positions described by `offsets`.
    pub fn forward_with_offsets(
        &self,
        x: &Tensor<S>,
        offsets: &OffsetField<S>,
    ) -> Result<Tensor<S>> {
        deformable_forward(
            x,
            &self.output_weights.value,
            &self.output_bias.value,
            self.config.conv_groups,
            offsets,
            self.config.boundary,
        )
    }

    pub fn forward(&self, x: &Tensor<S>) -> Result<(Tensor<S>, LayerCache<S>)> {
        let offsets = self.offset_forward(x)?;
        let y = self.forward_with_offsets(x, &offsets)?;
        Ok((
            y,
            LayerCache {
                x: x.clone(),
                offsets,
            },
        ))
    }

    /// The rigid convolution with this layer's output parameters (offset branch ignored).
    pub fn forward_regular(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_input(x)?;
        conv1d_forward(
            x,
            &self.output_weights.value,
            &self.output_bias.value,
            &self.config.geometry,
            self.config.conv_groups,
        )
    }

    /// Accumulates every parameter gradient and returns `d_x` (both branches summed).
    pub fn backward(
        &mut self,
        cache: &LayerCache<S>,
        grad_output: &Tensor<S>,
    ) -> Result<Tensor<S>> {
        let main = deformable_backward(
            &cache.x,
            &self.output_weights.value,
            self.config.conv_groups,
            &cache.offsets,
            self.config.boundary,
            grad_output,
        )?;
        let (b, t_out) = (main.d_delta_p.dim(0), main.d_delta_p.dim(1));
        let d_raw = main.d_delta_p.reshape(&[
            b,
            t_out,
            self.config.deformable_groups * self.config.geometry.kernel_size,
        ])?;
        let branch = conv1d_backward(
            &cache.x,
            &self.offset_weights.value,
            &self.config.geometry,
            1,
            &d_raw,
        )?;
        self.output_weights.accumulate(&main.d_weights);
        self.output_bias.accumulate(&main.d_bias);
        self.offset_weights.accumulate(&branch.d_weights);
        self.offset_bias.accumulate(&branch.d_bias);
        let mut d_x = main.d_x;
        d_x.add_assign(&branch.d_x)?;
        Ok(d_x)
    }

    /// Backward of [`forward_regular`](Self::forward_regular); touches only output parameters.
    pub fn backward_regular(
        &mut self,
        x: &Tensor<S>,
        grad_output: &Tensor<S>,
    ) -> Result<Tensor<S>> {
        let g = conv1d_backward(
            x,
            &self.output_weights.value,
            &self.config.geometry,
            self.config.conv_groups,
            grad_output,
        )?;
        self.output_weights.accumulate(&g.d_weights);
        self.output_bias.accumulate(&g.d_bias);
        Ok(g.d_x)
    }

    pub fn params(&self) -> [&Parameter<S>; 4] {
        [
            &self.offset_weights,
            &self.offset_bias,
            &self.output_weights,
            &self.output_bias,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter<S>; 4] {
        [
            &mut self.offset_weights,
            &mut self.offset_bias,
            &mut self.output_weights,
            &mut self.output_bias,
        ]
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Parameter::zero_grad);
    }
}
