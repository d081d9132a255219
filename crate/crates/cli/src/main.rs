mod analyze;
mod bench;
mod equiv;
mod gradcheck;
mod io;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use deformer_core::Error;
use serde::Serialize;

/// Deformable 1-D convolution: checks, toy training, analysis and benchmarks.
#[derive(Debug, Parser, Serialize)]
#[command(name = "deformer", version)]
struct Cli {
    /// Random seed shared by every subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the convolution kernels.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Real32,
    Real64,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Finite-difference check of the deformable layer and block gradients.
    Gradcheck(gradcheck::Args),
    /// Zero-offset deformable convolution against the regular convolution.
    Equiv(equiv::Args),
    /// Train one block on the jitter task.
    TrainToy(train::Args),
    /// Offset statistics, attention metrics, or unrolled kernel maps.
    Analyze(analyze::Args),
    /// Throughput of regular vs deformable depthwise convolution.
    Bench(bench::Args),
}

/// Outcome of a subcommand that completed without error.
pub enum Outcome {
    Pass,
    Fail,
}

fn run(cli: &Cli) -> deformer_core::Result<Outcome> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Gradcheck(a) => gradcheck::run(a, seed),
        Command::Equiv(a) => equiv::run(a, seed),
        Command::TrainToy(a) => train::run(a, cli.seed),
        Command::Analyze(a) => analyze::run(a),
        Command::Bench(a) => bench::run(a, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut shown = serde_json::to_value(&cli).expect("config serializes");
    shown["seed"] = cli.seed.unwrap_or(0).into();
    eprintln!("config: {shown}");
    if cli.threads == 0 {
        eprintln!("error: --threads must be >= 1");
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
