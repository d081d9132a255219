use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use deformer_core::{DeformConfig, DeformableConvLayer, Result, Scalar, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::io::sink;
use crate::{Dtype, Outcome};

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// Sequence length.
    #[arg(long, default_value_t = 1000)]
    t: usize,
    #[arg(long, default_value_t = 144)]
    channels: usize,
    /// Odd kernel size (same padding).
    #[arg(long, default_value_t = 15)]
    k: usize,
    /// Deformable groups.
    #[arg(long, default_value_t = 1)]
    groups: usize,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value_t = 5)]
    repeat: usize,
    #[arg(long, value_enum, default_value_t = Dtype::Real32)]
    dtype: Dtype,
    /// CSV path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kernel {
    Regular,
    Deformable,
}

/// Analytic multiply-accumulate count of one forward pass.
fn forward_ops(kernel: Kernel, a: &Args) -> u64 {
    let (b, t, f, k, g) = (a.batch, a.t, a.channels, a.k, a.groups);
    let conv = (b * t * f * k) as u64;
    match kernel {
        Kernel::Regular => conv,
        Kernel::Deformable => conv + (b * t * g * k) as u64 + (b * t * g * k * f * k) as u64,
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn time_it(repeat: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut samples = Vec::with_capacity(repeat);
    for _ in 0..repeat {
        let start = Instant::now();
        f()?;
        samples.push(start.elapsed().as_secs_f64());
    }
    Ok(median(samples))
}

fn bench<S: Scalar>(a: &Args, seed: u64, out: &mut dyn Write) -> Result<()> {
    let config = DeformConfig {
        deformable_groups: a.groups,
        ..DeformConfig::depthwise(a.channels, a.k)?
    };
    let mut layer = DeformableConvLayer::<S>::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fill = |t: &mut Tensor<S>, scale: f64| {
        for v in t.data_mut() {
            *v = S::from_f64_lossy(rng.random_range(-scale..scale));
        }
    };
    fill(&mut layer.output_weights.value, 1.0);
    fill(&mut layer.offset_weights.value, 0.05);
    fill(&mut layer.offset_bias.value, 1.0);
    let mut x = Tensor::zeros(&[a.batch, a.t, a.channels]);
    fill(&mut x, 1.0);
    let mut g = Tensor::zeros(&[a.batch, a.t, a.channels]);
    fill(&mut g, 1.0);

    writeln!(
        out,
        "kernel,pass,batch,t,channels,k,groups,repeat,median_seconds,frames_per_sec,ops"
    )?;
    for kernel in [Kernel::Regular, Kernel::Deformable] {
        for pass in ["forward", "forward_backward"] {
            let secs = time_it(a.repeat, || {
                match (kernel, pass) {
                    (Kernel::Regular, "forward") => {
                        layer.forward_regular(&x)?;
                    }
                    (Kernel::Regular, _) => {
                        layer.forward_regular(&x)?;
                        layer.backward_regular(&x, &g)?;
                    }
                    (Kernel::Deformable, "forward") => {
                        layer.forward(&x)?;
                    }
                    (Kernel::Deformable, _) => {
                        let (_, cache) = layer.forward(&x)?;
                        layer.backward(&cache, &g)?;
                    }
                }
                Ok(())
            })?;
            let ops = forward_ops(kernel, a) * if pass == "forward" { 1 } else { 3 };
            let name = match kernel {
                Kernel::Regular => "regular",
                Kernel::Deformable => "deformable",
            };
            writeln!(
                out,
                "{name},{pass},{},{},{},{},{},{},{:e},{:e},{ops}",
                a.batch,
                a.t,
                a.channels,
                a.k,
                a.groups,
                a.repeat,
                secs,
                (a.batch * a.t) as f64 / secs.max(f64::MIN_POSITIVE),
            )?;
        }
    }
    Ok(())
}

pub fn run(args: &Args, seed: u64) -> Result<Outcome> {
    if args.repeat == 0 || args.t == 0 || args.batch == 0 {
        return Err(deformer_core::Error::Usage(
            "--t, --batch and --repeat must be >= 1".into(),
        ));
    }
    let mut out = sink(args.out.as_deref())?;
    match args.dtype {
        Dtype::Real32 => bench::<f32>(args, seed, &mut out)?,
        Dtype::Real64 => bench::<f64>(args, seed, &mut out)?,
    }
    out.flush()?;
    Ok(Outcome::Pass)
}
