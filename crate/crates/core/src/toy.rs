//! Synthetic alignment-jitter detection task.
//!
//! A fixed `L × F` template is embedded once per example, with its frames
//! pushed apart by a smooth, non-decreasing per-frame displacement of at most
//! `J` frames. The template is rank one: a fixed channel vector `b` times a
//! ±1 temporal pattern. Every other frame is `b` scaled by a random amplitude
//! in (−1, 1), so one frame is weak evidence and the template is recognized
//! from its temporal pattern. Without jitter a rigid depthwise-separable
//! filter matches it exactly.
//! Targets mark the `L` frames carrying the embedded template.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{usage, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyTask {
    /// Seeds the template; batches sharing it come from the same task.
    pub template_seed: u64,
    /// Seeds placement, jitter, distractors, and noise for one batch.
    pub seed: u64,
    pub batch: usize,
    pub time: usize,
    pub channels: usize,
    /// Maximum per-frame displacement in frames.
    pub jitter: usize,
    pub template_len: usize,
    /// Signal-to-noise ratio of the additive Gaussian noise (template entries are ±1).
    pub snr_db: f64,
}

#[derive(Debug, Clone)]
pub struct ToyBatch<S> {
    /// `[B, T, F]`
    pub x: Tensor<S>,
    /// `[B, T]`, 1 on template frames.
    pub target: Tensor<S>,
    /// Per-example warp displacement of each template frame, `[B, L]`.
    pub warp: Vec<Vec<usize>>,
}

fn smoothstep(u: f64) -> f64 {
    u * u * (3.0 - 2.0 * u)
}

impl ToyTask {
    pub fn validate(&self) -> Result<()> {
        if self.template_len == 0 || self.channels == 0 || self.batch == 0 {
            return Err(usage("batch, channels and template_len must be >= 1"));
        }
        if self.template_len + self.jitter > self.time {
            return Err(usage(format!(
                "template_len {} plus jitter {} does not fit in T = {}",
                self.template_len, self.jitter, self.time
            )));
        }
        Ok(())
    }

    /// The `[L, F]` ±1 template: a fixed channel vector `b` modulated by a
    /// temporal sign pattern `a`, so row `i` is `a[i]·b`.
    pub fn template<S: Scalar>(&self) -> Tensor<S> {
        let (a, b) = self.factors();
        Tensor::from_fn(&[self.template_len, self.channels], |i| {
            S::from_f64_lossy(a[i / self.channels] * b[i % self.channels])
        })
    }

    /// Temporal pattern `a` (length `L`) and channel vector `b` (length `F`).
    fn factors(&self) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.template_seed);
        rng.set_stream(11);
        let sign = |rng: &mut ChaCha8Rng| if rng.random::<bool>() { 1.0 } else { -1.0 };
        let b: Vec<f64> = (0..self.channels).map(|_| sign(&mut rng)).collect();
        let a: Vec<f64> = (0..self.template_len).map(|_| sign(&mut rng)).collect();
        (a, b)
    }

    pub fn generate<S: Scalar>(&self) -> Result<ToyBatch<S>> {
        self.validate()?;
        let (l, f, t_len, j) = (self.template_len, self.channels, self.time, self.jitter);
        let template = self.template::<f64>();
        let rows: Vec<&[f64]> = template.data().chunks_exact(f).collect();
        let channel = self.factors().1;
        let sigma = 10f64.powf(-self.snr_db / 20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(12);

        let mut x = Vec::with_capacity(self.batch * t_len * f);
        let mut target = Vec::with_capacity(self.batch * t_len);
        let mut warp = Vec::with_capacity(self.batch);
        for _ in 0..self.batch {
            let amplitude: f64 = rng.random();
            let disp: Vec<usize> = (0..l)
                .map(|i| {
                    let u = if l > 1 {
                        i as f64 / (l - 1) as f64
                    } else {
                        0.0
                    };
                    (amplitude * j as f64 * smoothstep(u)).round() as usize
                })
                .collect();
            let start = rng.random_range(0..=t_len - l - j);
            let mut slot = vec![None; t_len];
            for (i, &d) in disp.iter().enumerate() {
                slot[start + i + d] = Some(i);
            }
            for s in &slot {
                let row: Vec<f64> = match s {
                    Some(i) => rows[*i].to_vec(),
                    None => {
                        let c: f64 = rng.random_range(-1.0..1.0);
                        channel.iter().map(|v| v * c).collect()
                    }
                };
                for &v in &row {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    x.push(S::from_f64_lossy(v + sigma * noise));
                }
                target.push(if s.is_some() { S::one() } else { S::zero() });
            }
            warp.push(disp);
        }
        Ok(ToyBatch {
            x: Tensor::new(vec![self.batch, t_len, f], x)?,
            target: Tensor::new(vec![self.batch, t_len], target)?,
            warp,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(jitter: usize) -> ToyTask {
        ToyTask {
            template_seed: 1,
            seed: 2,
            batch: 6,
            time: 40,
            channels: 4,
            jitter,
            template_len: 5,
            snr_db: 10.0,
        }
    }

    #[test]
    fn same_seed_same_batch() {
        let a = task(3).generate::<f64>().unwrap();
        let b = task(3).generate::<f64>().unwrap();
        assert!(a.x.bitwise_eq(&b.x));
        assert!(a.target.bitwise_eq(&b.target));
        let c = ToyTask { seed: 3, ..task(3) }.generate::<f64>().unwrap();
        assert!(!a.x.bitwise_eq(&c.x));
    }

    #[test]
    fn positive_fraction_is_template_over_length() {
        let b = task(3).generate::<f32>().unwrap();
        for row in b.target.data().chunks_exact(40) {
            let pos: f32 = row.iter().sum();
            assert_eq!(pos / 40.0, 5.0 / 40.0);
        }
    }

    #[test]
    fn displacement_bounded_and_monotone() {
        let b = task(4).generate::<f64>().unwrap();
        for d in &b.warp {
            assert!(d.iter().all(|&v| v <= 4));
            assert!(d.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(d[0], 0);
        }
        let rigid = task(0).generate::<f64>().unwrap();
        assert!(rigid.warp.iter().all(|d| d.iter().all(|&v| v == 0)));
    }

    #[test]
    fn template_is_rank_one_and_background_is_collinear() {
        let t = ToyTask {
            snr_db: 300.0,
            ..task(2)
        };
        let template = t.template::<f64>();
        let b: Vec<f64> = template.data()[..4].to_vec();
        for row in template.data().chunks_exact(4) {
            let s = row[0] / b[0];
            assert!(s == 1.0 || s == -1.0);
            assert!(row.iter().zip(&b).all(|(r, v)| *r == s * v));
        }
        let batch = t.generate::<f64>().unwrap();
        for (frame, &y) in batch.x.data().chunks_exact(4).zip(batch.target.data()) {
            let c = frame[0] / b[0];
            assert!(frame.iter().zip(&b).all(|(x, v)| (x - c * v).abs() < 1e-12));
            if y == 0.0 {
                assert!(c.abs() < 1.0);
            } else {
                assert!((c.abs() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn template_too_long_is_config_error() {
        let t = ToyTask {
            template_len: 39,
            ..task(3)
        };
        assert!(matches!(t.generate::<f64>(), Err(crate::Error::Usage(_))));
    }
}
