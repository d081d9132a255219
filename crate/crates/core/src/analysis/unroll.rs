use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{contract, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Sparse overlap counts of deformed kernel taps on the input grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnrollMap {
    /// `(output_index, rounded_input_index) → count`, every count ≥ 1.
    pub counts: BTreeMap<(usize, usize), u32>,
    /// Taps whose rounded position fell outside `[0, T)`.
    pub dropped: usize,
    /// `T_out · G_d · K`
    pub total_taps: usize,
}

impl UnrollMap {
    pub fn placed(&self) -> usize {
        self.counts.values().map(|&c| c as usize).sum()
    }

    /// CSV triples with header `t_out,t_in,count`, sorted by `(t_out, t_in)`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t_out,t_in,count")?;
        for (&(t, p), &c) in &self.counts {
            writeln!(out, "{t},{p},{c}")?;
        }
        Ok(())
    }
}

/// Rounds every deformed position to the nearest frame and counts overlaps per output step.
///
/// `p_prime` is `[T_out, G_d, K]` (or `[T_out, K]` for a single offset group).
pub fn unroll_kernels<S: Scalar>(p_prime: &Tensor<S>, input_len: usize) -> Result<UnrollMap> {
    let per_step = match p_prime.rank() {
        2 => p_prime.dim(1),
        3 => p_prime.dim(1) * p_prime.dim(2),
        _ => {
            return Err(contract(format!(
                "p_prime must be [T_out,G_d,K], got {:?}",
                p_prime.shape()
            )))
        }
    };
    let mut counts = BTreeMap::new();
    let mut dropped = 0;
    if per_step > 0 {
        for (t, row) in p_prime.data().chunks_exact(per_step).enumerate() {
            for &p in row {
                let r = p.into_f64().round();
                if r >= 0.0 && r < input_len as f64 {
                    *counts.entry((t, r as usize)).or_insert(0) += 1;
                } else {
                    dropped += 1;
                }
            }
        }
    }
    Ok(UnrollMap {
        counts,
        dropped,
        total_taps: p_prime.len(),
    })
}
