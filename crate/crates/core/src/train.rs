//! Toy training harness: one Deformer block, a per-frame linear head, and
//! binary cross-entropy on the jitter task.

use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::block::{glorot_bound, BlockConfig, DeformerBlock, DepthwiseMode, InitScheme, Mode};
use crate::deformconv::{conv1d_backward, conv1d_forward, Boundary, KernelGeometry, OffsetField};
use crate::error::{usage, Error, Result};
use crate::optim::{AdamConfig, OptimizerState};
use crate::param::Parameter;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::toy::ToyTask;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub seed: u64,
    pub batch: usize,
    pub time: usize,
    pub channels: usize,
    pub template_len: usize,
    pub jitter: usize,
    pub snr_db: f64,
    pub kernel_size: usize,
    pub deformable_groups: usize,
    pub offset_init: InitScheme,
    pub offset_lr_mult: f64,
    /// Train the rigid-conv baseline: offsets stay at zero.
    pub frozen_offsets: bool,
    pub steps: usize,
    pub lr_peak: f64,
    pub warmup_steps: usize,
    pub log_every: usize,
    /// Held-out batches used for the final loss.
    pub eval_batches: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            batch: 16,
            time: 48,
            channels: 8,
            template_len: 6,
            jitter: 3,
            snr_db: 10.0,
            kernel_size: 15,
            deformable_groups: 1,
            offset_init: InitScheme::ZeroOffset,
            offset_lr_mult: 1.0,
            frozen_offsets: false,
            steps: 600,
            lr_peak: 0.005,
            warmup_steps: 50,
            log_every: 25,
            eval_batches: 4,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| usage(format!("invalid value {value:?} for {key}")))
}

impl ToyConfig {
    /// Sets one field from its `key=value` spelling (`-` and `_` are interchangeable).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "seed" => self.seed = parse(&key, value)?,
            "batch" => self.batch = parse(&key, value)?,
            "time" => self.time = parse(&key, value)?,
            "channels" => self.channels = parse(&key, value)?,
            "template_len" => self.template_len = parse(&key, value)?,
            "jitter" => self.jitter = parse(&key, value)?,
            "snr_db" => self.snr_db = parse(&key, value)?,
            "kernel_size" => self.kernel_size = parse(&key, value)?,
            "deformable_groups" => self.deformable_groups = parse(&key, value)?,
            "offset_init" => self.offset_init = value.parse().map_err(Error::Usage)?,
            "offset_lr_mult" => self.offset_lr_mult = parse(&key, value)?,
            "frozen_offsets" => self.frozen_offsets = parse(&key, value)?,
            "steps" => self.steps = parse(&key, value)?,
            "lr_peak" => self.lr_peak = parse(&key, value)?,
            "warmup_steps" => self.warmup_steps = parse(&key, value)?,
            "log_every" => self.log_every = parse(&key, value)?,
            "eval_batches" => self.eval_batches = parse(&key, value)?,
            _ => return Err(usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Parses a flat `key = value` file; `#` starts a comment.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv_str(text)?;
        Ok(cfg)
    }

    pub fn apply_kv_str(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("line {}: expected key=value, got {raw:?}", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Resolved configuration in the same `key=value` format.
    pub fn to_kv_string(&self) -> String {
        let init = match self.offset_init {
            InitScheme::Xavier => "xavier",
            InitScheme::ZeroOffset => "zero",
        };
        let mut s = String::new();
        for (k, v) in [
            ("seed", self.seed.to_string()),
            ("batch", self.batch.to_string()),
            ("time", self.time.to_string()),
            ("channels", self.channels.to_string()),
            ("template_len", self.template_len.to_string()),
            ("jitter", self.jitter.to_string()),
            ("snr_db", self.snr_db.to_string()),
            ("kernel_size", self.kernel_size.to_string()),
            ("deformable_groups", self.deformable_groups.to_string()),
            ("offset_init", init.to_string()),
            ("offset_lr_mult", self.offset_lr_mult.to_string()),
            ("frozen_offsets", self.frozen_offsets.to_string()),
            ("steps", self.steps.to_string()),
            ("lr_peak", self.lr_peak.to_string()),
            ("warmup_steps", self.warmup_steps.to_string()),
            ("log_every", self.log_every.to_string()),
            ("eval_batches", self.eval_batches.to_string()),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0
            || self.deformable_groups == 0
            || !self.channels.is_multiple_of(self.deformable_groups)
        {
            return Err(usage(format!(
                "deformable_groups={} must divide channels={}",
                self.deformable_groups, self.channels
            )));
        }
        if self.log_every == 0 {
            return Err(usage("log_every must be >= 1"));
        }
        if self.eval_batches == 0 {
            return Err(usage("eval_batches must be >= 1"));
        }
        if self.offset_lr_mult.is_nan() || self.offset_lr_mult <= 0.0 {
            return Err(usage("offset_lr_mult must be positive"));
        }
        self.task(0).validate()
    }

    fn block_config(&self) -> BlockConfig {
        BlockConfig {
            kernel_size: self.kernel_size,
            deformable_groups: self.deformable_groups,
            offset_lr_mult: self.offset_lr_mult,
            boundary: Boundary::Zero,
            depthwise: if self.frozen_offsets {
                DepthwiseMode::Regular
            } else {
                DepthwiseMode::Deformable
            },
            ..BlockConfig::new(self.channels)
        }
    }

    fn task(&self, batch_seed: u64) -> ToyTask {
        ToyTask {
            template_seed: self.seed,
            seed: batch_seed,
            batch: self.batch,
            time: self.time,
            channels: self.channels,
            jitter: self.jitter,
            template_len: self.template_len,
            snr_db: self.snr_db,
        }
    }

    fn train_batch_seed(&self, step: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(step as u64 + 1)
    }

    fn eval_batch_seed(&self, i: usize) -> u64 {
        !self.train_batch_seed(i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss: f64,
    /// Mean absolute predicted offset over the logged batch.
    pub offset_l1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport<S> {
    pub log: Vec<LogRow>,
    /// Mean eval-mode loss over the held-out batches after training.
    pub final_loss: f64,
    /// Offsets predicted for the first held-out batch (zeros for frozen runs).
    pub final_offsets: OffsetField<S>,
}

/// Per-frame linear classifier on top of the block.
#[derive(Debug, Clone)]
struct Head<S> {
    weights: Parameter<S>,
    bias: Parameter<S>,
}

impl<S: Scalar> Head<S> {
    fn new(channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let mut weights = Parameter::zeros("head_weights", &[1, channels, 1]);
        let bound = glorot_bound(weights.shape());
        for v in weights.value.data_mut() {
            *v = S::from_f64_lossy(rng.random_range(-bound..=bound));
        }
        Self {
            weights,
            bias: Parameter::zeros("head_bias", &[1]),
        }
    }

    fn geometry() -> KernelGeometry {
        KernelGeometry::new(1, 1, 1, 0).expect("unit geometry")
    }

    fn forward(&self, h: &Tensor<S>) -> Result<Tensor<S>> {
        conv1d_forward(
            h,
            &self.weights.value,
            &self.bias.value,
            &Self::geometry(),
            1,
        )
    }

    fn backward(&mut self, h: &Tensor<S>, d_logits: &Tensor<S>) -> Result<Tensor<S>> {
        let g = conv1d_backward(h, &self.weights.value, &Self::geometry(), 1, d_logits)?;
        self.weights.accumulate(&g.d_weights);
        self.bias.accumulate(&g.d_bias);
        Ok(g.d_x)
    }
}

/// Mean binary cross-entropy with logits and its gradient.
fn bce_with_logits<S: Scalar>(logits: &Tensor<S>, target: &Tensor<S>) -> (f64, Tensor<S>) {
    let m = logits.len() as f64;
    let mut loss = 0.0;
    let grad = Tensor::from_fn(logits.shape(), |i| {
        let z = logits.data()[i].into_f64();
        let y = target.data()[i].into_f64();
        loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        let p = crate::block::sigmoid(z);
        S::from_f64_lossy((p - y) / m)
    });
    (loss / m, grad)
}

fn mean_abs_offset<S: Scalar>(offsets: Option<&OffsetField<S>>) -> f64 {
    match offsets {
        Some(o) if !o.delta_p.is_empty() => o.delta_p.abs_sum().into_f64() / o.delta_p.len() as f64,
        _ => 0.0,
    }
}

/// Trains one block on the jitter task. Deterministic for a fixed config.
pub fn train_toy<S: Scalar>(config: &ToyConfig) -> Result<TrainReport<S>> {
    config.validate()?;
    let mut block = DeformerBlock::<S>::new(config.block_config())?;
    block.init_params(config.offset_init, config.seed);
    let mut head = Head::<S>::new(config.channels, config.seed);
    let mut opt = OptimizerState::<S>::new(AdamConfig {
        lr_peak: config.lr_peak,
        warmup_steps: config.warmup_steps,
        ..AdamConfig::default()
    });

    let mut log = Vec::new();
    for step in 0..config.steps {
        let batch = config.task(config.train_batch_seed(step)).generate::<S>()?;
        let h = block.forward(&batch.x, Mode::Train)?;
        let logits = head.forward(&h)?;
        let target = batch.target.clone().reshape(logits.shape())?;
        let (loss, d_logits) = bce_with_logits(&logits, &target);
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        if step % config.log_every == 0 || step + 1 == config.steps {
            log.push(LogRow {
                step,
                loss,
                offset_l1: mean_abs_offset(block.cached_offsets()),
            });
        }

        block.zero_grad();
        head.weights.zero_grad();
        head.bias.zero_grad();
        let d_h = head.backward(&h, &d_logits)?;
        block.backward(&d_h)?;
        let mut params = block.params_mut();
        params.push(&mut head.weights);
        params.push(&mut head.bias);
        opt.step(&mut params)?;
    }

    let mut total = 0.0;
    let mut final_offsets = None;
    for i in 0..config.eval_batches {
        let batch = config.task(config.eval_batch_seed(i)).generate::<S>()?;
        let logits = head.forward(&block.forward(&batch.x, Mode::Eval)?)?;
        let target = batch.target.clone().reshape(logits.shape())?;
        total += bce_with_logits(&logits, &target).0;
        if i == 0 {
            final_offsets = Some(match block.offsets_for(&batch.x)? {
                Some(o) => o,
                None => OffsetField::zeros(
                    config.batch,
                    config.time,
                    block.deform.geometry(),
                    config.deformable_groups,
                ),
            });
        }
    }
    let final_loss = total / config.eval_batches as f64;
    if !final_loss.is_finite() {
        return Err(Error::Divergence {
            step: config.steps,
            loss: final_loss,
        });
    }
    Ok(TrainReport {
        log,
        final_loss,
        final_offsets: final_offsets.expect("eval_batches >= 1"),
    })
}

/// Writes the metrics log as CSV with header `step,loss,offset_l1`.
pub fn write_metrics_csv<W: Write>(log: &[LogRow], mut out: W) -> Result<()> {
    writeln!(out, "step,loss,offset_l1")?;
    for row in log {
        writeln!(out, "{},{:e},{:e}", row.step, row.loss, row.offset_l1)?;
    }
    Ok(())
}
