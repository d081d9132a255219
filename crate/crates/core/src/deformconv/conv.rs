use rayon::prelude::*;

use super::{Grouping, KernelGeometry};
use crate::error::{contract, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Grouped 1-D cross-correlation (no kernel flip) with implicit zero padding.
///
/// `x: [B,T,F]`, `weights: [N,F/g,K]`, `bias: [N]` → `[B,T_out,N]`. Each output
/// accumulates `bias` first, then taps in order, channels within a tap.
pub fn conv1d_forward<S: Scalar>(
    x: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
    geometry: &KernelGeometry,
    groups: usize,
) -> Result<Tensor<S>> {
    let gr = Grouping::check(x, weights, bias, groups)?;
    check_taps(&gr, geometry)?;
    let t_out = geometry.output_len(gr.time);
    let (f, n_out, k_taps) = (gr.channels_in, gr.channels_out, gr.taps);
    let (fg, ng) = (gr.in_per_group(), gr.out_per_group());
    let (xd, wd, bd) = (x.data(), weights.data(), bias.data());

    let mut out = Tensor::zeros(&[gr.batch, t_out, n_out]);
    if out.is_empty() {
        return Ok(out);
    }
    out.data_mut()
        .par_chunks_mut(t_out * n_out)
        .enumerate()
        .for_each(|(b, out_b)| {
            let x_b = &xd[b * gr.time * f..(b + 1) * gr.time * f];
            for t in 0..t_out {
                for n in 0..n_out {
                    let base = (n / ng) * fg;
                    let w_n = &wd[n * fg * k_taps..(n + 1) * fg * k_taps];
                    let mut acc = bd[n];
                    for k in 0..k_taps {
                        let p = geometry.position(t, k);
                        if p >= 0 && (p as usize) < gr.time {
                            let row = &x_b[p as usize * f + base..p as usize * f + base + fg];
                            for (c, &xv) in row.iter().enumerate() {
                                acc += w_n[c * k_taps + k] * xv;
                            }
                        } else {
                            // padding frame: same accumulation sequence as a zero sample
                            for c in 0..fg {
                                acc += w_n[c * k_taps + k] * S::zero();
                            }
                        }
                    }
                    out_b[t * n_out + n] = acc;
                }
            }
        });
    Ok(out)
}

/// Gradients of a regular convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<S> {
    pub d_x: Tensor<S>,
    pub d_weights: Tensor<S>,
    pub d_bias: Tensor<S>,
}

/// Backward pass of [`conv1d_forward`] for `grad_output: [B,T_out,N]`.
///
/// Weight and bias gradients are reduced per batch element and summed in
/// batch order, so results do not depend on the worker count.
pub fn conv1d_backward<S: Scalar>(
    x: &Tensor<S>,
    weights: &Tensor<S>,
    geometry: &KernelGeometry,
    groups: usize,
    grad_output: &Tensor<S>,
) -> Result<ConvGrads<S>> {
    let bias_shape = Tensor::zeros(&[weights.dim(0)]);
    let gr = Grouping::check(x, weights, &bias_shape, groups)?;
    check_taps(&gr, geometry)?;
    let t_out = geometry.output_len(gr.time);
    grad_output.expect_shape(&[gr.batch, t_out, gr.channels_out])?;
    let (f, n_out, k_taps, time) = (gr.channels_in, gr.channels_out, gr.taps, gr.time);
    let (fg, ng) = (gr.in_per_group(), gr.out_per_group());
    let (xd, wd, gd) = (x.data(), weights.data(), grad_output.data());

    let partials: Vec<(Vec<S>, Vec<S>, Vec<S>)> = (0..gr.batch)
        .into_par_iter()
        .map(|b| {
            let x_b = &xd[b * time * f..(b + 1) * time * f];
            let g_b = &gd[b * t_out * n_out..(b + 1) * t_out * n_out];
            let mut dx = vec![S::zero(); time * f];
            let mut dw = vec![S::zero(); wd.len()];
            let mut db = vec![S::zero(); n_out];
            for t in 0..t_out {
                for n in 0..n_out {
                    let g = g_b[t * n_out + n];
                    db[n] += g;
                    let base = (n / ng) * fg;
                    for k in 0..k_taps {
                        let p = geometry.position(t, k);
                        if p < 0 || p as usize >= time {
                            continue;
                        }
                        let at = p as usize * f + base;
                        for c in 0..fg {
                            let wi = n * fg * k_taps + c * k_taps + k;
                            dw[wi] += g * x_b[at + c];
                            dx[at + c] += g * wd[wi];
                        }
                    }
                }
            }
            (dx, dw, db)
        })
        .collect();

    let mut d_x = Vec::with_capacity(xd.len());
    let mut d_w = vec![S::zero(); wd.len()];
    let mut d_b = vec![S::zero(); n_out];
    for (dx, dw, db) in partials {
        d_x.extend(dx);
        d_w.iter_mut().zip(dw).for_each(|(a, v)| *a += v);
        d_b.iter_mut().zip(db).for_each(|(a, v)| *a += v);
    }
    Ok(ConvGrads {
        d_x: Tensor::new(x.shape().to_vec(), d_x)?,
        d_weights: Tensor::new(weights.shape().to_vec(), d_w)?,
        d_bias: Tensor::new(vec![n_out], d_b)?,
    })
}

pub(super) fn check_taps(gr: &Grouping, geometry: &KernelGeometry) -> Result<()> {
    if gr.taps != geometry.kernel_size {
        return Err(contract(format!(
            "weights have {} taps but geometry has kernel_size {}",
            gr.taps, geometry.kernel_size
        )));
    }
    Ok(())
}
