use serde::Serialize;

use crate::error::{contract, usage, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Allowed deviation of an attention row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-5;

/// Row-stochastic attention weights `[heads, T_q, T_k]`, stored as `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    weights: Tensor<f64>,
}

impl AttentionMap {
    /// Accepts `[H, T_q, T_k]` or a single-head `[T_q, T_k]` tensor.
    pub fn new<S: Scalar>(weights: &Tensor<S>) -> Result<Self> {
        let weights: Tensor<f64> = match weights.rank() {
            2 => weights
                .cast()
                .reshape(&[1, weights.dim(0), weights.dim(1)])?,
            3 => weights.cast(),
            _ => {
                return Err(contract(format!(
                    "attention map must be [H,T_q,T_k], got {:?}",
                    weights.shape()
                )))
            }
        };
        let t_k = weights.dim(2);
        if weights.is_empty() {
            return Err(contract("attention map has no rows"));
        }
        for (r, row) in weights.data().chunks_exact(t_k).enumerate() {
            if let Some(v) = row.iter().find(|v| v.is_nan() || **v < 0.0) {
                return Err(contract(format!(
                    "row {r} has a negative or NaN weight {v}"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(contract(format!("row {r} sums to {s}, not 1")));
            }
        }
        Ok(Self { weights })
    }

    pub fn heads(&self) -> usize {
        self.weights.dim(0)
    }

    pub fn queries(&self) -> usize {
        self.weights.dim(1)
    }

    pub fn keys(&self) -> usize {
        self.weights.dim(2)
    }

    fn head(&self, h: usize) -> impl Iterator<Item = &[f64]> {
        let (tq, tk) = (self.queries(), self.keys());
        self.weights.data()[h * tq * tk..(h + 1) * tq * tk].chunks_exact(tk)
    }
}

/// Natural-log entropy with `0·ln 0 = 0`.
fn entropy(p: impl IntoIterator<Item = f64>) -> f64 {
    -p.into_iter()
        .filter(|&v| v > 0.0)
        .map(|v| v * v.ln())
        .sum::<f64>()
}

/// Mean row entropy per head; lies in `[0, ln T_k]`.
pub fn globalness(a: &AttentionMap) -> Vec<f64> {
    (0..a.heads())
        .map(|h| {
            a.head(h)
                .map(|row| entropy(row.iter().copied()))
                .sum::<f64>()
                / a.queries() as f64
        })
        .collect()
}

/// Negative entropy of the query-averaged distribution per head; lies in `[−ln T_k, 0]`.
pub fn verticality(a: &AttentionMap) -> Vec<f64> {
    (0..a.heads())
        .map(|h| {
            let mut avg = vec![0.0; a.keys()];
            for row in a.head(h) {
                avg.iter_mut().zip(row).for_each(|(m, &v)| *m += v);
            }
            let tq = a.queries() as f64;
            -entropy(avg.into_iter().map(|v| v / tq))
        })
        .collect()
}

/// Negative expected distance from the normalized diagonal per head:
/// `−(1/T_q) Σ_t Σ_s α[t,s] · |s/(T_k−1) − t/(T_q−1)|`. Zero iff all mass sits on the diagonal.
pub fn diagonality(a: &AttentionMap) -> Result<Vec<f64>> {
    let (tq, tk) = (a.queries(), a.keys());
    if tq < 2 || tk < 2 {
        return Err(contract(format!(
            "diagonality needs T_q, T_k >= 2, got {tq}x{tk}"
        )));
    }
    let (nq, nk) = ((tq - 1) as f64, (tk - 1) as f64);
    Ok((0..a.heads())
        .map(|h| {
            let total: f64 = a
                .head(h)
                .enumerate()
                .map(|(t, row)| {
                    let u = t as f64 / nq;
                    row.iter()
                        .enumerate()
                        .map(|(s, &w)| w * (s as f64 / nk - u).abs())
                        .sum::<f64>()
                })
                .sum();
            -total / tq as f64
        })
        .collect())
}

/// Diagonality of the square map where every query attends only to its farthest key.
pub fn farthest_key_diagonality(len: usize) -> f64 {
    let n = (len - 1) as f64;
    let total: f64 = (0..len).map(|t| t.max(len - 1 - t) as f64 / n).sum();
    -total / len as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricBounds {
    pub max_length: usize,
    pub globalness_upper: f64,
    pub verticality_lower: f64,
    pub diagonality_lower: f64,
}

/// Corpus-level metric bounds from the encoded sequence lengths.
pub fn metric_bounds(lengths: &[usize]) -> Result<MetricBounds> {
    let max_length = *lengths
        .iter()
        .max()
        .ok_or_else(|| usage("metric bounds need at least one sequence length"))?;
    if let Some(&short) = lengths.iter().find(|&&l| l < 2) {
        return Err(usage(format!(
            "sequence length {short} is too short for diagonality"
        )));
    }
    let ln = (max_length as f64).ln();
    let diagonality_lower = lengths
        .iter()
        .map(|&l| farthest_key_diagonality(l))
        .fold(0.0, f64::min);
    Ok(MetricBounds {
        max_length,
        globalness_upper: ln,
        verticality_lower: -ln,
        diagonality_lower,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeadMetrics {
    pub globalness: f64,
    pub verticality: f64,
    pub diagonality: f64,
}

/// Per-head metrics and their average across heads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionReport {
    pub heads: Vec<HeadMetrics>,
    pub mean: HeadMetrics,
}

impl AttentionReport {
    pub fn compute(a: &AttentionMap) -> Result<Self> {
        let (g, v, d) = (globalness(a), verticality(a), diagonality(a)?);
        let heads: Vec<HeadMetrics> = (0..a.heads())
            .map(|h| HeadMetrics {
                globalness: g[h],
                verticality: v[h],
                diagonality: d[h],
            })
            .collect();
        let mean = HeadMetrics::average(&heads);
        Ok(Self { heads, mean })
    }
}

impl HeadMetrics {
    pub fn average(items: &[HeadMetrics]) -> HeadMetrics {
        let n = items.len() as f64;
        HeadMetrics {
            globalness: items.iter().map(|m| m.globalness).sum::<f64>() / n,
            verticality: items.iter().map(|m| m.verticality).sum::<f64>() / n,
            diagonality: items.iter().map(|m| m.diagonality).sum::<f64>() / n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(tq: usize, tk: usize) -> AttentionMap {
        AttentionMap::new(&Tensor::full(&[tq, tk], 1.0 / tk as f64)).unwrap()
    }

    fn one_hot(tq: usize, tk: usize, key: impl Fn(usize) -> usize) -> AttentionMap {
        let mut t = Tensor::<f64>::zeros(&[tq, tk]);
        for q in 0..tq {
            t.set(&[q, key(q)], 1.0);
        }
        AttentionMap::new(&t).unwrap()
    }

    #[test]
    fn uniform_globalness_is_ln_tk() {
        assert!((globalness(&uniform(3, 4))[0] - 4f64.ln()).abs() < 1e-12);
        assert!((verticality(&uniform(3, 4))[0] + 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn one_hot_rows() {
        let a = one_hot(5, 5, |q| q);
        assert_eq!(globalness(&a)[0], 0.0);
        let same_key = one_hot(5, 7, |_| 3);
        assert_eq!(verticality(&same_key)[0], 0.0);
        assert_eq!(diagonality(&a).unwrap()[0], 0.0);
    }

    #[test]
    fn uniform_diagonality_near_minus_third() {
        let d = diagonality(&uniform(64, 64)).unwrap()[0];
        assert!((d + 1.0 / 3.0).abs() < 0.01, "{d}");
    }

    #[test]
    fn bounds_for_small_lengths() {
        let b = metric_bounds(&[2]).unwrap();
        assert_eq!(b.diagonality_lower, -1.0);
        let b = metric_bounds(&[4, 3]).unwrap();
        assert_eq!(b.max_length, 4);
        assert!((b.globalness_upper - 4f64.ln()).abs() < 1e-15);
        // T=4: rows reach 1, 2/3, 2/3, 1 → −5/6; T=3: 1, 1/2, 1 → −5/6
        assert!((b.diagonality_lower + 5.0 / 6.0).abs() < 1e-15);
        assert!(metric_bounds(&[]).is_err());
        assert!(metric_bounds(&[1]).is_err());
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let t = Tensor::new(vec![2, 2], vec![0.5, 0.6, 1.0, 0.0]).unwrap();
        assert!(AttentionMap::new(&t).is_err());
        let t = Tensor::new(vec![1, 2], vec![1.5, -0.5]).unwrap();
        assert!(AttentionMap::new(&t).is_err());
        let d = one_hot(1, 4, |_| 0);
        assert!(diagonality(&d).is_err());
    }

    #[test]
    fn report_averages_heads() {
        let mut t = Tensor::<f64>::zeros(&[2, 4, 4]);
        for q in 0..4 {
            t.set(&[0, q, q], 1.0);
            for k in 0..4 {
                t.set(&[1, q, k], 0.25);
            }
        }
        let r = AttentionReport::compute(&AttentionMap::new(&t).unwrap()).unwrap();
        assert_eq!(r.heads.len(), 2);
        assert!((r.mean.globalness - 4f64.ln() / 2.0).abs() < 1e-12);
    }
}
