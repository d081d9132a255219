use crate::error::Result;
use crate::param::Parameter;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over the `(batch, time)` axes of `[B,T,F]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<S> {
    pub scale: Parameter<S>,
    pub shift: Parameter<S>,
    pub running_mean: Tensor<S>,
    pub running_var: Tensor<S>,
    pub epsilon: S,
    pub momentum: S,
}

#[derive(Debug, Clone)]
pub struct NormCache<S> {
    pub normalized: Tensor<S>,
    pub inv_std: Vec<S>,
}

impl<S: Scalar> BatchNorm<S> {
    pub fn new(channels: usize) -> Self {
        let mut scale = Parameter::zeros("bn_scale", &[channels]);
        scale.value.fill(S::one());
        Self {
            scale,
            shift: Parameter::zeros("bn_shift", &[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], S::one()),
            epsilon: S::from_f64_lossy(BN_EPSILON),
            momentum: S::from_f64_lossy(BN_MOMENTUM),
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.value.len()
    }

    /// Normalizes with batch statistics and updates the running averages
    /// (the running variance uses the unbiased estimate).
    pub fn forward_train(&mut self, u: &Tensor<S>) -> Result<(Tensor<S>, NormCache<S>)> {
        let f = self.channels();
        let rows = u.len() / f;
        let m = S::from_f64_lossy(rows as f64);
        let mut mean = vec![S::zero(); f];
        for row in u.data().chunks_exact(f) {
            mean.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
        }
        mean.iter_mut().for_each(|v| *v /= m);
        let mut var = vec![S::zero(); f];
        for row in u.data().chunks_exact(f) {
            for c in 0..f {
                let d = row[c] - mean[c];
                var[c] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= m);
        let inv_std: Vec<S> = var
            .iter()
            .map(|&v| S::one() / (v + self.epsilon).sqrt())
            .collect();

        let mut normalized = u.clone();
        for row in normalized.data_mut().chunks_exact_mut(f) {
            for c in 0..f {
                row[c] = (row[c] - mean[c]) * inv_std[c];
            }
        }
        let y = self.affine(&normalized);

        let unbias = if rows > 1 {
            m / (m - S::one())
        } else {
            S::one()
        };
        let keep = S::one() - self.momentum;
        for c in 0..f {
            let rm = &mut self.running_mean.data_mut()[c];
            *rm = keep * *rm + self.momentum * mean[c];
            let rv = &mut self.running_var.data_mut()[c];
            *rv = keep * *rv + self.momentum * var[c] * unbias;
        }
        Ok((
            y,
            NormCache {
                normalized,
                inv_std,
            },
        ))
    }

    pub fn forward_eval(&self, u: &Tensor<S>) -> Tensor<S> {
        let f = self.channels();
        let mut normalized = u.clone();
        let (rm, rv) = (self.running_mean.data(), self.running_var.data());
        for row in normalized.data_mut().chunks_exact_mut(f) {
            for c in 0..f {
                row[c] = (row[c] - rm[c]) / (rv[c] + self.epsilon).sqrt();
            }
        }
        self.affine(&normalized)
    }

    fn affine(&self, normalized: &Tensor<S>) -> Tensor<S> {
        let f = self.channels();
        let (g, b) = (self.scale.value.data(), self.shift.value.data());
        let mut y = normalized.clone();
        for row in y.data_mut().chunks_exact_mut(f) {
            for c in 0..f {
                row[c] = g[c] * row[c] + b[c];
            }
        }
        y
    }

    /// Batch-statistics backward; accumulates scale/shift gradients and returns `d_u`.
    pub fn backward(&mut self, cache: &NormCache<S>, d_y: &Tensor<S>) -> Result<Tensor<S>> {
        d_y.expect_shape(cache.normalized.shape())?;
        let f = self.channels();
        let rows = d_y.len() / f;
        let m = S::from_f64_lossy(rows as f64);
        let gamma = self.scale.value.data().to_vec();
        let mut d_scale = vec![S::zero(); f];
        let mut d_shift = vec![S::zero(); f];
        for (dy, xh) in d_y
            .data()
            .chunks_exact(f)
            .zip(cache.normalized.data().chunks_exact(f))
        {
            for c in 0..f {
                d_scale[c] += dy[c] * xh[c];
                d_shift[c] += dy[c];
            }
        }
        // d_xhat = dy·γ, so Σd_xhat = γ·Σdy and Σ(d_xhat·xhat) = γ·Σ(dy·xhat)
        let mut d_u = d_y.clone();
        for (du, xh) in d_u
            .data_mut()
            .chunks_exact_mut(f)
            .zip(cache.normalized.data().chunks_exact(f))
        {
            for c in 0..f {
                let dxh = du[c] * gamma[c];
                du[c] = cache.inv_std[c] / m
                    * (m * dxh - gamma[c] * d_shift[c] - xh[c] * gamma[c] * d_scale[c]);
            }
        }
        self.scale.accumulate(&Tensor::new(vec![f], d_scale)?);
        self.shift.accumulate(&Tensor::new(vec![f], d_shift)?);
        Ok(d_u)
    }
}
