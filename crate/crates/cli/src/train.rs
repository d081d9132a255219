use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use deformer_core::train::write_metrics_csv;
use deformer_core::{train_toy, Error, InitScheme, Result, Scalar, ToyConfig, TrainReport};
use serde::Serialize;

use crate::io::{create, emit_json, save_tensor};
use crate::{Dtype, Outcome};

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    /// `key=value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// `zero` or `xavier`.
    #[arg(long)]
    offset_init: Option<String>,
    #[arg(long)]
    offset_lr_mult: Option<f64>,
    #[arg(long)]
    deformable_groups: Option<usize>,
    #[arg(long)]
    jitter: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Train the rigid baseline with offsets held at zero.
    #[arg(long)]
    frozen_offsets: bool,
    #[arg(long, value_enum, default_value_t = Dtype::Real32)]
    dtype: Dtype,
    #[arg(long, default_value = "toy_run")]
    out_dir: PathBuf,
}

#[derive(Serialize)]
struct Summary<'a> {
    dtype: Dtype,
    steps: usize,
    jitter: usize,
    frozen_offsets: bool,
    final_loss: f64,
    offset_dumps: &'a [String],
}

fn resolve(args: &Args, seed: Option<u64>) -> Result<ToyConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
            ToyConfig::from_kv_str(&text)?
        }
        None => ToyConfig::default(),
    };
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(init) = &args.offset_init {
        cfg.offset_init = init.parse::<InitScheme>().map_err(Error::Usage)?;
    }
    if let Some(m) = args.offset_lr_mult {
        cfg.offset_lr_mult = m;
    }
    if let Some(g) = args.deformable_groups {
        cfg.deformable_groups = g;
    }
    if let Some(j) = args.jitter {
        cfg.jitter = j;
    }
    if let Some(s) = args.steps {
        cfg.steps = s;
    }
    cfg.frozen_offsets |= args.frozen_offsets;
    cfg.validate()?;
    Ok(cfg)
}

fn write_outputs<S: Scalar>(report: &TrainReport<S>, cfg: &ToyConfig, args: &Args) -> Result<()> {
    let dir = &args.out_dir;
    let mut metrics = create(&dir.join("metrics.csv"))?;
    write_metrics_csv(&report.log, &mut metrics)?;
    metrics.flush()?;

    let mut config = create(&dir.join("config.txt"))?;
    config.write_all(cfg.to_kv_string().as_bytes())?;
    config.flush()?;

    let mut names = Vec::new();
    for b in 0..report.final_offsets.batch() {
        let name = format!("utt{b:03}.dt");
        save_tensor(
            &report.final_offsets.delta_for(b),
            &dump_path(dir, "offsets", &name),
        )?;
        save_tensor(
            &report.final_offsets.p_prime_for(b),
            &dump_path(dir, "positions", &name),
        )?;
        names.push(name);
    }
    emit_json(
        &Summary {
            dtype: args.dtype,
            steps: cfg.steps,
            jitter: cfg.jitter,
            frozen_offsets: cfg.frozen_offsets,
            final_loss: report.final_loss,
            offset_dumps: &names,
        },
        Some(&dir.join("summary.json")),
    )
}

fn dump_path(dir: &Path, kind: &str, name: &str) -> PathBuf {
    dir.join(kind).join("layer0").join(name)
}

fn train<S: Scalar>(cfg: &ToyConfig, args: &Args) -> Result<f64> {
    let report = train_toy::<S>(cfg)?;
    write_outputs(&report, cfg, args)?;
    Ok(report.final_loss)
}

pub fn run(args: &Args, seed: Option<u64>) -> Result<Outcome> {
    let cfg = resolve(args, seed)?;
    for line in cfg.to_kv_string().lines() {
        eprintln!("  {line}");
    }
    let final_loss = match args.dtype {
        Dtype::Real32 => train::<f32>(&cfg, args)?,
        Dtype::Real64 => train::<f64>(&cfg, args)?,
    };
    println!("final_loss {final_loss:e}");
    Ok(Outcome::Pass)
}
