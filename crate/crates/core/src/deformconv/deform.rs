use rayon::prelude::*;

use super::interp::Stencil;
use super::{Boundary, Grouping, KernelGeometry};
use crate::error::{contract, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Predicted offsets `Δp` and deformed positions `p' = p0 + Δp`, both `[B, T_out, G_d, K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetField<S> {
    pub delta_p: Tensor<S>,
    pub p_prime: Tensor<S>,
}

impl<S: Scalar> OffsetField<S> {
    /// Adds the rigid grid of `geometry` to `delta_p`.
    pub fn from_delta(
        delta_p: Tensor<S>,
        geometry: &KernelGeometry,
        input_len: usize,
    ) -> Result<Self> {
        if delta_p.rank() != 4 {
            return Err(contract(format!(
                "delta_p must be [B,T_out,G_d,K], got {:?}",
                delta_p.shape()
            )));
        }
        let t_out = geometry.output_len(input_len);
        let k = geometry.kernel_size;
        if delta_p.dim(1) != t_out || delta_p.dim(3) != k {
            return Err(contract(format!(
                "delta_p {:?} does not match T_out={t_out}, K={k}",
                delta_p.shape()
            )));
        }
        let groups = delta_p.dim(2);
        let mut p_prime = delta_p.clone();
        for (i, p) in p_prime.data_mut().iter_mut().enumerate() {
            let tap = i % k;
            let t = (i / (k * groups)) % t_out;
            *p += S::from_f64_lossy(geometry.position(t, tap) as f64);
        }
        Ok(Self { delta_p, p_prime })
    }

    pub fn zeros(batch: usize, input_len: usize, geometry: &KernelGeometry, groups: usize) -> Self {
        let shape = [
            batch,
            geometry.output_len(input_len),
            groups,
            geometry.kernel_size,
        ];
        Self::from_delta(Tensor::zeros(&shape), geometry, input_len)
            .expect("shape built from geometry")
    }

    pub fn batch(&self) -> usize {
        self.delta_p.dim(0)
    }

    pub fn output_len(&self) -> usize {
        self.delta_p.dim(1)
    }

    pub fn groups(&self) -> usize {
        self.delta_p.dim(2)
    }

    pub fn taps(&self) -> usize {
        self.delta_p.dim(3)
    }

    /// Offsets of one batch element as a `[T_out, G_d, K]` tensor.
    pub fn delta_for(&self, b: usize) -> Tensor<S> {
        slice_batch(&self.delta_p, b)
    }

    /// Deformed positions of one batch element as a `[T_out, G_d, K]` tensor.
    pub fn p_prime_for(&self, b: usize) -> Tensor<S> {
        slice_batch(&self.p_prime, b)
    }
}

fn slice_batch<S: Scalar>(t: &Tensor<S>, b: usize) -> Tensor<S> {
    let inner: usize = t.shape()[1..].iter().product();
    Tensor::new(
        t.shape()[1..].to_vec(),
        t.data()[b * inner..(b + 1) * inner].to_vec(),
    )
    .expect("slice of a valid tensor")
}

struct DeformShape {
    gr: Grouping,
    t_out: usize,
    def_groups: usize,
    /// Input channels per deformable group.
    per_def: usize,
}

fn check<S: Scalar>(
    x: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
    groups: usize,
    offsets: &OffsetField<S>,
) -> Result<DeformShape> {
    let gr = Grouping::check(x, weights, bias, groups)?;
    offsets.p_prime.expect_shape(offsets.delta_p.shape())?;
    let (ob, t_out, def_groups, taps) = (
        offsets.batch(),
        offsets.output_len(),
        offsets.groups(),
        offsets.taps(),
    );
    if ob != gr.batch || taps != gr.taps {
        return Err(contract(format!(
            "offsets {:?} do not match batch {} / taps {}",
            offsets.delta_p.shape(),
            gr.batch,
            gr.taps
        )));
    }
    if def_groups == 0 || gr.channels_in % def_groups != 0 {
        return Err(contract(format!(
            "deformable groups {def_groups} must divide F={}",
            gr.channels_in
        )));
    }
    Ok(DeformShape {
        gr,
        t_out,
        def_groups,
        per_def: gr.channels_in / def_groups,
    })
}

/// Builds the `[K][F]` column of interpolated samples for one output step.
#[inline]
fn gather_columns<S: Scalar>(
    sh: &DeformShape,
    x_b: &[S],
    pp_t: &[S],
    boundary: Boundary,
    stencils: &mut [Stencil<S>],
    cols: &mut [S],
) {
    let (f, k_taps, time) = (sh.gr.channels_in, sh.gr.taps, sh.gr.time);
    for gd in 0..sh.def_groups {
        for k in 0..k_taps {
            let st = Stencil::new(pp_t[gd * k_taps + k], time, boundary);
            stencils[gd * k_taps + k] = st;
            for ch in gd * sh.per_def..(gd + 1) * sh.per_def {
                cols[k * f + ch] = st.sample(|i| x_b[i * f + ch], time);
            }
        }
    }
}

/// Output convolution evaluated at the deformed positions.
///
/// `Y[b,t,n] = bias[n] + Σ_{k,c} W[n,c,k] · x̃(b, channel, p'[b,t,group(channel),k])`
/// where `x̃` is the linear interpolation of the channel. With `Δp ≡ 0` and the
/// zero boundary this reproduces [`conv1d_forward`](super::conv1d_forward) exactly.
pub fn deformable_forward<S: Scalar>(
    x: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
    groups: usize,
    offsets: &OffsetField<S>,
    boundary: Boundary,
) -> Result<Tensor<S>> {
    let sh = check(x, weights, bias, groups, offsets)?;
    let gr = sh.gr;
    let (f, n_out, k_taps, t_out) = (gr.channels_in, gr.channels_out, gr.taps, sh.t_out);
    let (fg, ng) = (gr.in_per_group(), gr.out_per_group());
    let (xd, wd, bd, pd) = (
        x.data(),
        weights.data(),
        bias.data(),
        offsets.p_prime.data(),
    );
    let pp_stride = t_out * sh.def_groups * k_taps;

    let mut out = Tensor::zeros(&[gr.batch, t_out, n_out]);
    if out.is_empty() {
        return Ok(out);
    }
    out.data_mut()
        .par_chunks_mut(t_out * n_out)
        .enumerate()
        .for_each(|(b, out_b)| {
            let x_b = &xd[b * gr.time * f..(b + 1) * gr.time * f];
            let pp_b = &pd[b * pp_stride..(b + 1) * pp_stride];
            let mut cols = vec![S::zero(); k_taps * f];
            let mut stencils = vec![Stencil::new(S::zero(), 1, boundary); sh.def_groups * k_taps];
            for t in 0..t_out {
                let pp_t = &pp_b[t * sh.def_groups * k_taps..(t + 1) * sh.def_groups * k_taps];
                gather_columns(&sh, x_b, pp_t, boundary, &mut stencils, &mut cols);
                for n in 0..n_out {
                    let base = (n / ng) * fg;
                    let w_n = &wd[n * fg * k_taps..(n + 1) * fg * k_taps];
                    let mut acc = bd[n];
                    for k in 0..k_taps {
                        let col = &cols[k * f + base..k * f + base + fg];
                        for (c, &v) in col.iter().enumerate() {
                            acc += w_n[c * k_taps + k] * v;
                        }
                    }
                    out_b[t * n_out + n] = acc;
                }
            }
        });
    Ok(out)
}

/// Gradients of [`deformable_forward`].
///
/// `d_x` covers only the interpolation path; the offset branch's share is added
/// by backpropagating `d_delta_p` through the offset convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformGrads<S> {
    pub d_x: Tensor<S>,
    pub d_weights: Tensor<S>,
    pub d_bias: Tensor<S>,
    pub d_delta_p: Tensor<S>,
}

pub fn deformable_backward<S: Scalar>(
    x: &Tensor<S>,
    weights: &Tensor<S>,
    groups: usize,
    offsets: &OffsetField<S>,
    boundary: Boundary,
    grad_output: &Tensor<S>,
) -> Result<DeformGrads<S>> {
    let bias_shape = Tensor::zeros(&[weights.dim(0)]);
    let sh = check(x, weights, &bias_shape, groups, offsets)?;
    let gr = sh.gr;
    let (f, n_out, k_taps, t_out, time) =
        (gr.channels_in, gr.channels_out, gr.taps, sh.t_out, gr.time);
    let (fg, ng) = (gr.in_per_group(), gr.out_per_group());
    grad_output.expect_shape(&[gr.batch, t_out, n_out])?;
    let (xd, wd, pd, gd) = (
        x.data(),
        weights.data(),
        offsets.p_prime.data(),
        grad_output.data(),
    );
    let pp_stride = t_out * sh.def_groups * k_taps;

    let partials: Vec<_> = (0..gr.batch)
        .into_par_iter()
        .map(|b| {
            let x_b = &xd[b * time * f..(b + 1) * time * f];
            let pp_b = &pd[b * pp_stride..(b + 1) * pp_stride];
            let g_b = &gd[b * t_out * n_out..(b + 1) * t_out * n_out];
            let mut dx = vec![S::zero(); time * f];
            let mut dw = vec![S::zero(); wd.len()];
            let mut db = vec![S::zero(); n_out];
            let mut dp = vec![S::zero(); pp_stride];
            let mut cols = vec![S::zero(); k_taps * f];
            let mut dcols = vec![S::zero(); k_taps * f];
            let mut stencils = vec![Stencil::new(S::zero(), 1, boundary); sh.def_groups * k_taps];

            for t in 0..t_out {
                let pp_t = &pp_b[t * sh.def_groups * k_taps..(t + 1) * sh.def_groups * k_taps];
                gather_columns(&sh, x_b, pp_t, boundary, &mut stencils, &mut cols);
                dcols.iter_mut().for_each(|v| *v = S::zero());

                for n in 0..n_out {
                    let g = g_b[t * n_out + n];
                    db[n] += g;
                    let base = (n / ng) * fg;
                    for k in 0..k_taps {
                        for c in 0..fg {
                            let wi = n * fg * k_taps + c * k_taps + k;
                            dw[wi] += g * cols[k * f + base + c];
                            dcols[k * f + base + c] += g * wd[wi];
                        }
                    }
                }

                for gd_i in 0..sh.def_groups {
                    for k in 0..k_taps {
                        let st = stencils[gd_i * k_taps + k];
                        let mut d_pos = S::zero();
                        for ch in gd_i * sh.per_def..(gd_i + 1) * sh.per_def {
                            let dc = dcols[k * f + ch];
                            let (lo, hi) = (st.lo, st.lo + 1);
                            if lo >= 0 && (lo as usize) < time {
                                dx[lo as usize * f + ch] += dc * st.w_lo;
                            }
                            if hi >= 0 && (hi as usize) < time {
                                dx[hi as usize * f + ch] += dc * st.w_hi;
                            }
                            let (a, bv) = st.neighbours(|i| x_b[i * f + ch], time);
                            d_pos += dc * (bv - a);
                        }
                        dp[t * sh.def_groups * k_taps + gd_i * k_taps + k] = d_pos * st.pass;
                    }
                }
            }
            (dx, dw, db, dp)
        })
        .collect();

    let mut d_x = Vec::with_capacity(xd.len());
    let mut d_w = vec![S::zero(); wd.len()];
    let mut d_b = vec![S::zero(); n_out];
    let mut d_p = Vec::with_capacity(pd.len());
    for (dx, dw, db, dp) in partials {
        d_x.extend(dx);
        d_w.iter_mut().zip(dw).for_each(|(a, v)| *a += v);
        d_b.iter_mut().zip(db).for_each(|(a, v)| *a += v);
        d_p.extend(dp);
    }
    Ok(DeformGrads {
        d_x: Tensor::new(x.shape().to_vec(), d_x)?,
        d_weights: Tensor::new(weights.shape().to_vec(), d_w)?,
        d_bias: Tensor::new(vec![n_out], d_b)?,
        d_delta_p: Tensor::new(offsets.delta_p.shape().to_vec(), d_p)?,
    })
}
