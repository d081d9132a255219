use std::path::PathBuf;

use deformer_core::gradcheck::{check_block, check_deformable_layer, GradCheckSetup, GradReport};
use deformer_core::Result;
use serde::Serialize;

use crate::io::emit_json;
use crate::Outcome;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[arg(long, default_value_t = 2)]
    batch: usize,
    #[arg(long, default_value_t = 8)]
    time: usize,
    #[arg(long, default_value_t = 4)]
    channels: usize,
    #[arg(long, default_value_t = 3)]
    kernel_size: usize,
    #[arg(long, default_value_t = 1)]
    deformable_groups: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// Pass iff every relative error is below this.
    #[arg(long, default_value_t = 1e-5)]
    threshold: f64,
    /// JSON report path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Report {
    setup: GradCheckSetup,
    threshold: f64,
    max_rel_err: f64,
    pass: bool,
    checks: Vec<GradReport>,
}

pub fn run(args: &Args, seed: u64) -> Result<Outcome> {
    let setup = GradCheckSetup {
        seed,
        batch: args.batch,
        time: args.time,
        channels: args.channels,
        kernel_size: args.kernel_size,
        deformable_groups: args.deformable_groups,
        eps: args.eps,
    };
    setup.validate()?;
    let checks = vec![check_deformable_layer(&setup)?, check_block(&setup)?];
    let max_rel_err = checks.iter().map(|c| c.max_rel_err).fold(0.0, f64::max);
    let pass = max_rel_err < args.threshold;
    emit_json(
        &Report {
            setup,
            threshold: args.threshold,
            max_rel_err,
            pass,
            checks,
        },
        args.out.as_deref(),
    )?;
    Ok(if pass { Outcome::Pass } else { Outcome::Fail })
}
