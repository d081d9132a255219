//! The Deformer convolution module.
//!
//! `y = x + pw2(swish(batchnorm(depthwise_deformable(glu(pw1(x))))))`, where
//! `pw1: F → 2F` and `pw2: F → F` are pointwise convolutions and the depthwise
//! stage is a [`DeformableConvLayer`] with `groups == F`.

mod act;
mod init;
mod norm;

pub use act::{glu, glu_backward, sigmoid, swish, swish_grad};
pub use init::{glorot_bound, InitScheme};
pub use norm::{BatchNorm, NormCache, BN_EPSILON, BN_MOMENTUM};

use crate::deformconv::{
    conv1d_backward, conv1d_forward, Boundary, DeformConfig, DeformableConvLayer, KernelGeometry,
    LayerCache, OffsetField,
};
use crate::error::{contract, usage, Result};
use crate::param::Parameter;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Which kernel runs the depthwise stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DepthwiseMode {
    /// Offsets predicted from the input and learned.
    #[default]
    Deformable,
    /// Offsets frozen at zero: the rigid depthwise convolution of a Conformer module.
    Regular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockConfig {
    pub channels: usize,
    pub kernel_size: usize,
    pub deformable_groups: usize,
    pub offset_lr_mult: f64,
    pub boundary: Boundary,
    pub depthwise: DepthwiseMode,
    pub residual: bool,
    /// Reserved; only 0 is accepted.
    pub dropout: f64,
}

impl BlockConfig {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            kernel_size: 15,
            deformable_groups: 1,
            offset_lr_mult: 1.0,
            boundary: Boundary::Zero,
            depthwise: DepthwiseMode::Deformable,
            residual: true,
            dropout: 0.0,
        }
    }
}

/// Activations from a train-mode forward pass.
#[derive(Debug, Clone)]
struct BlockCache<S> {
    x: Tensor<S>,
    pw1_out: Tensor<S>,
    gated: Tensor<S>,
    deform: Option<LayerCache<S>>,
    norm: NormCache<S>,
    normed: Tensor<S>,
    activated: Tensor<S>,
}

#[derive(Debug, Clone)]
pub struct DeformerBlock<S> {
    pub config: BlockConfig,
    /// `[2F, F, 1]`
    pub pw1_weights: Parameter<S>,
    pub pw1_bias: Parameter<S>,
    pub deform: DeformableConvLayer<S>,
    pub norm: BatchNorm<S>,
    /// `[F, F, 1]`
    pub pw2_weights: Parameter<S>,
    pub pw2_bias: Parameter<S>,
    cache: Option<BlockCache<S>>,
}

fn pointwise() -> KernelGeometry {
    KernelGeometry::new(1, 1, 1, 0).expect("unit geometry")
}

impl<S: Scalar> DeformerBlock<S> {
    /// Builds a block with all-zero weights (unit batch-norm scale).
    pub fn new(config: BlockConfig) -> Result<Self> {
        if config.dropout != 0.0 {
            return Err(usage("dropout is not supported; set it to 0"));
        }
        let f = config.channels;
        let deform_config = DeformConfig {
            deformable_groups: config.deformable_groups,
            boundary: config.boundary,
            offset_lr_mult: config.offset_lr_mult,
            ..DeformConfig::depthwise(f, config.kernel_size)?
        };
        let mut deform = DeformableConvLayer::new(deform_config)?;
        if config.depthwise == DepthwiseMode::Regular {
            deform.offset_weights.frozen = true;
            deform.offset_bias.frozen = true;
        }
        Ok(Self {
            config,
            pw1_weights: Parameter::zeros("pw1_weights", &[2 * f, f, 1]),
            pw1_bias: Parameter::zeros("pw1_bias", &[2 * f]),
            deform,
            norm: BatchNorm::new(f),
            pw2_weights: Parameter::zeros("pw2_weights", &[f, f, 1]),
            pw2_bias: Parameter::zeros("pw2_bias", &[f]),
            cache: None,
        })
    }

    pub fn channels(&self) -> usize {
        self.config.channels
    }

    /// Re-initializes every parameter from `seed`.
    pub fn init_params(&mut self, scheme: InitScheme, seed: u64) {
        let (mut main, mut offset) = init::streams(seed);
        for p in [
            &mut self.pw1_weights,
            &mut self.deform.output_weights,
            &mut self.pw2_weights,
        ] {
            init::glorot_fill(p, &mut main);
        }
        for p in [
            &mut self.pw1_bias,
            &mut self.deform.output_bias,
            &mut self.pw2_bias,
            &mut self.deform.offset_bias,
        ] {
            p.value.fill(S::zero());
        }
        match scheme {
            InitScheme::Xavier => init::glorot_fill(&mut self.deform.offset_weights, &mut offset),
            InitScheme::ZeroOffset => self.deform.offset_weights.value.fill(S::zero()),
        }
        self.norm = BatchNorm::new(self.channels());
        self.cache = None;
    }

    /// Offsets the depthwise stage would use for `x` (`None` for [`DepthwiseMode::Regular`]).
    pub fn offsets_for(&self, x: &Tensor<S>) -> Result<Option<OffsetField<S>>> {
        if self.config.depthwise == DepthwiseMode::Regular {
            return Ok(None);
        }
        let gated = self.gate(x)?.1;
        self.deform.offset_forward(&gated).map(Some)
    }

    /// Offsets used by the last train-mode forward, if it ran the deformable kernel.
    pub fn cached_offsets(&self) -> Option<&OffsetField<S>> {
        self.cache.as_ref()?.deform.as_ref().map(|c| &c.offsets)
    }

    fn gate(&self, x: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>)> {
        let f = self.channels();
        if x.rank() != 3 || x.dim(2) != f {
            return Err(contract(format!(
                "block expects [B,T,{f}], got {:?}",
                x.shape()
            )));
        }
        let h = conv1d_forward(
            x,
            &self.pw1_weights.value,
            &self.pw1_bias.value,
            &pointwise(),
            1,
        )?;
        let gated = Tensor::new(x.shape().to_vec(), glu(h.data(), f))?;
        Ok((h, gated))
    }

    /// Runs the block. Train mode uses batch statistics, updates the running
    /// averages, and keeps the activations needed by [`backward`](Self::backward).
    pub fn forward(&mut self, x: &Tensor<S>, mode: Mode) -> Result<Tensor<S>> {
        self.cache = None;
        let (pw1_out, gated) = self.gate(x)?;
        if x.dim(1) == 0 {
            return Err(contract("block needs T >= 1"));
        }
        let (u, deform) = match self.config.depthwise {
            DepthwiseMode::Deformable => {
                let (u, c) = self.deform.forward(&gated)?;
                (u, Some(c))
            }
            DepthwiseMode::Regular => (self.deform.forward_regular(&gated)?, None),
        };
        let (normed, norm) = match mode {
            Mode::Train => {
                let (v, c) = self.norm.forward_train(&u)?;
                (v, Some(c))
            }
            Mode::Eval => (self.norm.forward_eval(&u), None),
        };
        let activated = normed.map(swish);
        let mut y = conv1d_forward(
            &activated,
            &self.pw2_weights.value,
            &self.pw2_bias.value,
            &pointwise(),
            1,
        )?;
        if self.config.residual {
            y.add_assign(x)?;
        }
        if let Some(norm) = norm {
            self.cache = Some(BlockCache {
                x: x.clone(),
                pw1_out,
                gated,
                deform,
                norm,
                normed,
                activated,
            });
        }
        Ok(y)
    }

    /// Accumulates parameter gradients from the last train-mode forward and returns `d_x`.
    pub fn backward(&mut self, grad_output: &Tensor<S>) -> Result<Tensor<S>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| usage("backward called without a cached train-mode forward"))?;
        let f = self.channels();
        grad_output.expect_shape(cache.x.shape())?;

        let g2 = conv1d_backward(
            &cache.activated,
            &self.pw2_weights.value,
            &pointwise(),
            1,
            grad_output,
        )?;
        self.pw2_weights.accumulate(&g2.d_weights);
        self.pw2_bias.accumulate(&g2.d_bias);

        let mut d_normed = g2.d_x;
        for (d, &z) in d_normed.data_mut().iter_mut().zip(cache.normed.data()) {
            *d *= swish_grad(z);
        }
        let d_u = self.norm.backward(&cache.norm, &d_normed)?;
        let d_gated = match &cache.deform {
            Some(c) => self.deform.backward(c, &d_u)?,
            None => self.deform.backward_regular(&cache.gated, &d_u)?,
        };
        let d_h = Tensor::new(
            cache.pw1_out.shape().to_vec(),
            glu_backward(cache.pw1_out.data(), f, d_gated.data()),
        )?;
        let g1 = conv1d_backward(&cache.x, &self.pw1_weights.value, &pointwise(), 1, &d_h)?;
        self.pw1_weights.accumulate(&g1.d_weights);
        self.pw1_bias.accumulate(&g1.d_bias);

        let mut d_x = g1.d_x;
        if self.config.residual {
            d_x.add_assign(grad_output)?;
        }
        Ok(d_x)
    }

    pub fn params(&self) -> Vec<&Parameter<S>> {
        let [ow, ob, w, b] = self.deform.params();
        vec![
            &self.pw1_weights,
            &self.pw1_bias,
            ow,
            ob,
            w,
            b,
            &self.norm.scale,
            &self.norm.shift,
            &self.pw2_weights,
            &self.pw2_bias,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<S>> {
        let [ow, ob, w, b] = self.deform.params_mut();
        vec![
            &mut self.pw1_weights,
            &mut self.pw1_bias,
            ow,
            ob,
            w,
            b,
            &mut self.norm.scale,
            &mut self.norm.shift,
            &mut self.pw2_weights,
            &mut self.pw2_bias,
        ]
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Parameter::zero_grad);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(f: usize, k: usize) -> BlockConfig {
        BlockConfig {
            kernel_size: k,
            ..BlockConfig::new(f)
        }
    }

    #[test]
    fn output_shape_matches_input() {
        let mut b = DeformerBlock::<f64>::new(config(4, 5)).unwrap();
        b.init_params(InitScheme::Xavier, 1);
        let x = Tensor::from_fn(&[2, 9, 4], |i| (i as f64 * 0.3).sin());
        assert_eq!(b.forward(&x, Mode::Train).unwrap().shape(), x.shape());
        assert_eq!(b.forward(&x, Mode::Eval).unwrap().shape(), x.shape());
    }

    #[test]
    fn zero_weights_with_residual_is_identity() {
        let mut b = DeformerBlock::<f64>::new(config(3, 3)).unwrap();
        let x = Tensor::from_fn(&[1, 6, 3], |i| i as f64 - 4.0);
        let y = b.forward(&x, Mode::Train).unwrap();
        assert_eq!(y, x);
        let g = Tensor::from_fn(x.shape(), |i| (i as f64).cos());
        assert_eq!(b.backward(&g).unwrap(), g);
    }

    #[test]
    fn backward_needs_train_forward() {
        let mut b = DeformerBlock::<f32>::new(config(2, 3)).unwrap();
        let g = Tensor::zeros(&[1, 4, 2]);
        assert!(matches!(b.backward(&g), Err(crate::Error::Usage(_))));
        b.forward(&Tensor::zeros(&[1, 4, 2]), Mode::Eval).unwrap();
        assert!(b.backward(&g).is_err());
    }

    #[test]
    fn init_is_deterministic_and_schemes_share_main_weights() {
        let mut a = DeformerBlock::<f64>::new(config(4, 3)).unwrap();
        let mut b = a.clone();
        let mut c = a.clone();
        a.init_params(InitScheme::Xavier, 7);
        b.init_params(InitScheme::Xavier, 7);
        c.init_params(InitScheme::ZeroOffset, 7);
        for (pa, pb) in a.params().iter().zip(b.params()) {
            assert!(pa.value.bitwise_eq(&pb.value));
        }
        assert!(c.deform.offset_weights.value.abs_sum() == 0.0);
        assert!(a.deform.offset_weights.value.abs_sum() > 0.0);
        assert!(a.pw1_weights.value.bitwise_eq(&c.pw1_weights.value));
        assert!(a
            .deform
            .output_weights
            .value
            .bitwise_eq(&c.deform.output_weights.value));
    }

    #[test]
    fn regular_mode_freezes_offsets() {
        let b = DeformerBlock::<f64>::new(BlockConfig {
            depthwise: DepthwiseMode::Regular,
            ..config(2, 3)
        })
        .unwrap();
        assert!(b.deform.offset_weights.frozen && b.deform.offset_bias.frozen);
        assert!(b.offsets_for(&Tensor::zeros(&[1, 3, 2])).unwrap().is_none());
    }

    #[test]
    fn rejects_dropout_and_bad_groups() {
        assert!(DeformerBlock::<f64>::new(BlockConfig {
            dropout: 0.1,
            ..config(4, 3)
        })
        .is_err());
        assert!(DeformerBlock::<f64>::new(BlockConfig {
            deformable_groups: 3,
            ..config(4, 3)
        })
        .is_err());
    }
}
