//! Central finite-difference checks of the analytic gradients, in `f64`.
//!
//! Layers are drawn at random with offsets pushed away from integer
//! positions: the interpolation is not differentiable there and a difference
//! quotient straddling the kink disagrees with the one-sided analytic slope.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::block::{BlockConfig, DeformerBlock, InitScheme, Mode};
use crate::deformconv::{DeformConfig, DeformableConvLayer, KernelGeometry, OffsetField};
use crate::error::{usage, Result};
use crate::tensor::Tensor;

/// Denominator floor of the relative error, so gradients near zero are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;
/// Minimum distance of any sampled position from an integer.
pub const KINK_MARGIN: f64 = 1e-3;
/// Largest `B·T·F·K` accepted.
pub const DIM_BUDGET: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckSetup {
    pub seed: u64,
    pub batch: usize,
    pub time: usize,
    pub channels: usize,
    pub kernel_size: usize,
    pub deformable_groups: usize,
    pub eps: f64,
}

impl Default for GradCheckSetup {
    fn default() -> Self {
        Self {
            seed: 0,
            batch: 2,
            time: 8,
            channels: 4,
            kernel_size: 3,
            deformable_groups: 1,
            eps: 1e-5,
        }
    }
}

impl GradCheckSetup {
    pub fn validate(&self) -> Result<()> {
        let volume = self.batch * self.time * self.channels * self.kernel_size;
        if volume == 0 {
            return Err(usage("all gradcheck dimensions must be >= 1"));
        }
        if volume > DIM_BUDGET {
            return Err(usage(format!(
                "B·T·F·K = {volume} exceeds the finite-difference budget of {DIM_BUDGET}"
            )));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(usage("kernel_size must be odd"));
        }
        if self.deformable_groups == 0 || !self.channels.is_multiple_of(self.deformable_groups) {
            return Err(usage("deformable_groups must divide channels"));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(usage("eps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub elements: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradReport {
    pub target: String,
    pub checks: Vec<TensorCheck>,
    pub max_rel_err: f64,
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn compare(name: &str, analytic: &[f64], numeric: &[f64]) -> TensorCheck {
    let (mut abs, mut rel) = (0.0f64, 0.0f64);
    for (&a, &n) in analytic.iter().zip(numeric) {
        abs = abs.max((a - n).abs());
        rel = rel.max(rel_err(a, n));
    }
    TensorCheck {
        name: name.to_string(),
        elements: analytic.len(),
        max_abs_err: abs,
        max_rel_err: rel,
    }
}

fn report(target: &str, checks: Vec<TensorCheck>) -> GradReport {
    let max_rel_err = checks.iter().map(|c| c.max_rel_err).fold(0.0, f64::max);
    GradReport {
        target: target.to_string(),
        checks,
        max_rel_err,
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

fn clear_of_integers(offsets: &OffsetField<f64>) -> bool {
    offsets
        .p_prime
        .data()
        .iter()
        .all(|p| (p - p.round()).abs() >= KINK_MARGIN)
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Central difference of `loss` with respect to every element of `values`.
fn numeric_grad(values: &mut [f64], eps: f64, mut loss: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let orig = values[i];
            values[i] = orig + eps;
            let up = loss(values);
            values[i] = orig - eps;
            let down = loss(values);
            values[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Random deformable layer, input, and upstream gradient with positions clear of integers.
pub fn random_layer(
    setup: &GradCheckSetup,
) -> Result<(DeformableConvLayer<f64>, Tensor<f64>, Tensor<f64>)> {
    setup.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let (b, t, f, k) = (setup.batch, setup.time, setup.channels, setup.kernel_size);
    let config = DeformConfig {
        deformable_groups: setup.deformable_groups,
        ..DeformConfig::depthwise(f, k)?
    };
    let geometry = KernelGeometry::same(k, 1)?;
    for _ in 0..1000 {
        let mut layer = DeformableConvLayer::new(config)?;
        layer.output_weights.value = uniform(&mut rng, layer.output_weights.shape(), 1.0);
        layer.output_bias.value = uniform(&mut rng, layer.output_bias.shape(), 0.5);
        layer.offset_weights.value = uniform(&mut rng, layer.offset_weights.shape(), 0.15);
        layer.offset_bias.value = uniform(&mut rng, layer.offset_bias.shape(), 1.5);
        let x = uniform(&mut rng, &[b, t, f], 1.0);
        let g = uniform(&mut rng, &[b, geometry.output_len(t), f], 1.0);
        if clear_of_integers(&layer.offset_forward(&x)?) {
            return Ok((layer, x, g));
        }
    }
    Err(usage(
        "could not draw offsets clear of integer positions; shrink the dims",
    ))
}

/// Checks every gradient of a full deformable layer (offset branch included).
pub fn check_deformable_layer(setup: &GradCheckSetup) -> Result<GradReport> {
    let (mut layer, x, g) = random_layer(setup)?;
    let (_, cache) = layer.forward(&x)?;
    layer.zero_grad();
    let d_x = layer.backward(&cache, &g)?;

    let loss = |layer: &DeformableConvLayer<f64>, x: &Tensor<f64>| -> f64 {
        dot(&layer.forward(x).expect("shapes fixed").0, &g)
    };
    let eps = setup.eps;
    let mut checks = Vec::new();

    let mut xv = x.data().to_vec();
    let num = numeric_grad(&mut xv, eps, |v| {
        loss(
            &layer,
            &Tensor::new(x.shape().to_vec(), v.to_vec()).unwrap(),
        )
    });
    checks.push(compare("d_x", d_x.data(), &num));

    for i in 0..4 {
        let analytic = layer.params()[i].grad.data().to_vec();
        let name = layer.params()[i].name.clone();
        let mut probe = layer.clone();
        let mut vals = probe.params()[i].value.data().to_vec();
        let num = numeric_grad(&mut vals, eps, |v| {
            probe.params_mut()[i].value.data_mut().copy_from_slice(v);
            loss(&probe, &x)
        });
        checks.push(compare(&format!("d_{name}"), &analytic, &num));
    }
    Ok(report("deformable_layer", checks))
}

/// Random Deformer block (batch-norm in train mode) with positions clear of integers.
pub fn random_block(
    setup: &GradCheckSetup,
) -> Result<(DeformerBlock<f64>, Tensor<f64>, Tensor<f64>)> {
    setup.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed ^ 0xB10C);
    let (b, t, f) = (setup.batch, setup.time, setup.channels);
    let config = BlockConfig {
        kernel_size: setup.kernel_size,
        deformable_groups: setup.deformable_groups,
        ..BlockConfig::new(f)
    };
    for attempt in 0..1000u64 {
        let mut block = DeformerBlock::new(config)?;
        block.init_params(InitScheme::Xavier, setup.seed.wrapping_add(attempt));
        block.deform.offset_bias.value = uniform(&mut rng, block.deform.offset_bias.shape(), 1.5);
        block.pw1_bias.value = uniform(&mut rng, &[2 * f], 0.3);
        block.deform.output_bias.value = uniform(&mut rng, &[f], 0.3);
        block.pw2_bias.value = uniform(&mut rng, &[f], 0.3);
        block.norm.scale.value = Tensor::from_fn(&[f], |_| rng.random_range(0.5..1.5));
        block.norm.shift.value = uniform(&mut rng, &[f], 0.5);
        let x = uniform(&mut rng, &[b, t, f], 1.0);
        let g = uniform(&mut rng, &[b, t, f], 1.0);
        let offsets = block.offsets_for(&x)?.expect("deformable block");
        if clear_of_integers(&offsets) {
            return Ok((block, x, g));
        }
    }
    Err(usage(
        "could not draw offsets clear of integer positions; shrink the dims",
    ))
}

/// Checks every parameter and input gradient of the full block.
pub fn check_block(setup: &GradCheckSetup) -> Result<GradReport> {
    let (mut block, x, g) = random_block(setup)?;
    block.forward(&x, Mode::Train)?;
    block.zero_grad();
    let d_x = block.backward(&g)?;

    let loss = |block: &mut DeformerBlock<f64>, x: &Tensor<f64>| -> f64 {
        dot(&block.forward(x, Mode::Train).expect("shapes fixed"), &g)
    };
    let eps = setup.eps;
    let mut checks = Vec::new();

    let mut probe = block.clone();
    let mut xv = x.data().to_vec();
    let num = numeric_grad(&mut xv, eps, |v| {
        loss(
            &mut probe,
            &Tensor::new(x.shape().to_vec(), v.to_vec()).unwrap(),
        )
    });
    checks.push(compare("d_x", d_x.data(), &num));

    let count = block.params().len();
    for i in 0..count {
        let analytic = block.params()[i].grad.data().to_vec();
        let name = block.params()[i].name.clone();
        let mut probe = block.clone();
        let mut vals = probe.params()[i].value.data().to_vec();
        let num = numeric_grad(&mut vals, eps, |v| {
            probe.params_mut()[i].value.data_mut().copy_from_slice(v);
            loss(&mut probe, &x)
        });
        checks.push(compare(&format!("d_{name}"), &analytic, &num));
    }
    Ok(report("deformer_block", checks))
}
