use std::path::PathBuf;

use deformer_core::{
    conv1d_forward, deformable_forward, Boundary, KernelGeometry, OffsetField, Result, Scalar,
    Tensor,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::io::emit_json;
use crate::{Dtype, Outcome};

/// Multiply-accumulate budget of one trial.
const MAC_BUDGET: usize = 4_000_000;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, value_enum, default_value_t = Dtype::Real64)]
    dtype: Dtype,
    /// Clamp sampling positions instead of zero padding (trials then use no padding).
    #[arg(long)]
    clamp: bool,
    /// JSON report path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
struct Trial {
    batch: usize,
    time: usize,
    channels_in: usize,
    channels_out: usize,
    conv_groups: usize,
    deformable_groups: usize,
    kernel_size: usize,
    stride: usize,
    dilation: usize,
    padding: usize,
}

#[derive(Serialize)]
struct Report {
    dtype: Dtype,
    boundary: &'static str,
    trials: usize,
    tolerance: f64,
    bitwise_equal_trials: usize,
    max_abs_diff: f64,
    max_rel_diff: f64,
    worst_trial: Option<Trial>,
    pass: bool,
}

fn draw_trial(rng: &mut ChaCha8Rng, clamp: bool) -> Trial {
    let kernel_size = *[1, 3, 15].choose(rng).unwrap();
    let channels_in = *[1, 4, 256].choose(rng).unwrap();
    let conv_groups = *[1, channels_in].choose(rng).unwrap();
    let valid: Vec<usize> = [1, 2, channels_in]
        .into_iter()
        .filter(|g| channels_in % g == 0)
        .collect();
    let deformable_groups = *valid.choose(rng).unwrap();
    let channels_out = if conv_groups == channels_in {
        channels_in
    } else {
        *[1, 4, channels_in].choose(rng).unwrap()
    };
    let stride = rng.random_range(1..=2);
    let dilation = rng.random_range(1..=2);
    let span: usize = dilation * (kernel_size - 1);
    let padding = if clamp { 0 } else { rng.random_range(0..=span) };
    let batch = rng.random_range(1..=2);
    let min_time = (span + 1).saturating_sub(2 * padding).max(1);
    let mut time = min_time + rng.random_range(0..24);
    let macs = |t: usize| {
        let t_out = (t + 2 * padding - span - 1) / stride + 1;
        batch * t_out * channels_out * (channels_in / conv_groups) * kernel_size
    };
    while time > min_time && macs(time) > MAC_BUDGET {
        time -= 1;
    }
    Trial {
        batch,
        time,
        channels_in,
        channels_out,
        conv_groups,
        deformable_groups,
        kernel_size,
        stride,
        dilation,
        padding,
    }
}

fn uniform<S: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<S> {
    Tensor::from_fn(shape, |_| S::from_f64_lossy(rng.random_range(-1.0..1.0)))
}

/// Returns `(max |a-b|, max |b|, bitwise equal)` for one trial.
fn compare<S: Scalar>(
    rng: &mut ChaCha8Rng,
    t: &Trial,
    boundary: Boundary,
) -> Result<(f64, f64, bool)> {
    let geometry = KernelGeometry::new(t.kernel_size, t.stride, t.dilation, t.padding)?;
    let x = uniform::<S>(rng, &[t.batch, t.time, t.channels_in]);
    let w = uniform::<S>(
        rng,
        &[t.channels_out, t.channels_in / t.conv_groups, t.kernel_size],
    );
    let bias = uniform::<S>(rng, &[t.channels_out]);
    let offsets = OffsetField::zeros(t.batch, t.time, &geometry, t.deformable_groups);
    let regular = conv1d_forward(&x, &w, &bias, &geometry, t.conv_groups)?;
    let deformed = deformable_forward(&x, &w, &bias, t.conv_groups, &offsets, boundary)?;
    let scale = regular
        .data()
        .iter()
        .map(|v| v.into_f64().abs())
        .fold(0.0, f64::max);
    Ok((
        deformed.max_abs_diff(&regular)?.into_f64(),
        scale,
        deformed.bitwise_eq(&regular),
    ))
}

pub fn run(args: &Args, seed: u64) -> Result<Outcome> {
    let boundary = if args.clamp {
        Boundary::Clamp
    } else {
        Boundary::Zero
    };
    let tolerance = match args.dtype {
        Dtype::Real64 => 0.0,
        Dtype::Real32 => 1e-6,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut max_abs, mut max_rel, mut exact) = (0.0f64, 0.0f64, 0);
    let mut worst = None;
    for _ in 0..args.trials {
        let trial = draw_trial(&mut rng, args.clamp);
        let (abs, scale, bitwise) = match args.dtype {
            Dtype::Real32 => compare::<f32>(&mut rng, &trial, boundary)?,
            Dtype::Real64 => compare::<f64>(&mut rng, &trial, boundary)?,
        };
        let rel = if abs == 0.0 {
            0.0
        } else {
            abs / scale.max(f64::MIN_POSITIVE)
        };
        exact += bitwise as usize;
        if worst.is_none() || rel > max_rel {
            worst = Some(trial);
        }
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(rel);
    }
    let pass = match args.dtype {
        Dtype::Real64 => max_abs == 0.0,
        Dtype::Real32 => max_rel <= tolerance,
    };
    emit_json(
        &Report {
            dtype: args.dtype,
            boundary: if args.clamp { "clamp" } else { "zero" },
            trials: args.trials,
            tolerance,
            bitwise_equal_trials: exact,
            max_abs_diff: max_abs,
            max_rel_diff: max_rel,
            worst_trial: worst,
            pass,
        },
        args.out.as_deref(),
    )?;
    Ok(if pass { Outcome::Pass } else { Outcome::Fail })
}
