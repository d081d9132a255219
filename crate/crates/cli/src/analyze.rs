use std::io::Write;
use std::path::{Path, PathBuf};

use deformer_core::analysis::{
    corpus_aggregate, load_dumps, metric_bounds, unroll_kernels, AttentionMap, AttentionReport,
    HeadMetrics, MetricBounds, OffsetStats,
};
use deformer_core::{Error, Result};
use serde::Serialize;

use crate::io::{dt_files, emit_json, sink};
use crate::Outcome;

#[derive(Debug, clap::Args, Serialize)]
pub struct Args {
    #[command(subcommand)]
    mode: Mode,
}

#[derive(Debug, clap::Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    /// Boxplot statistics of offset dumps; each path is one layer (a directory or a file).
    Offsets {
        #[arg(required = true)]
        layers: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Globalness, verticality and diagonality of `[H, T_q, T_k]` attention maps.
    Attention {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Overlap counts of one `[T_out, G_d, K]` position dump as CSV triples.
    Unroll {
        input: PathBuf,
        /// Input length T; defaults to T_out.
        #[arg(long)]
        input_length: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct LayerStats {
    layer: String,
    files: usize,
    stats: OffsetStats,
}

#[derive(Serialize)]
struct OffsetsReport {
    layers: Vec<LayerStats>,
}

#[derive(Serialize)]
struct MapReport {
    file: String,
    heads: usize,
    queries: usize,
    keys: usize,
    metrics: AttentionReport,
}

#[derive(Serialize)]
struct CorpusAttention {
    maps: Vec<MapReport>,
    mean: HeadMetrics,
    metric_bounds: MetricBounds,
}

fn label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn tag(path: &Path, e: Error) -> Error {
    match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Contract(m) => Error::Contract(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn offsets(layers: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut report = OffsetsReport { layers: Vec::new() };
    for layer in layers {
        let files = dt_files(layer)?;
        let dumps = load_dumps(&files)?;
        let stats = corpus_aggregate(&dumps).map_err(|e| tag(layer, e))?;
        report.layers.push(LayerStats {
            layer: label(layer),
            files: files.len(),
            stats,
        });
    }
    emit_json(&report, out)
}

fn attention(inputs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut files = Vec::new();
    for p in inputs {
        files.extend(dt_files(p)?);
    }
    let maps = load_dumps(&files)?;
    let mut reports = Vec::new();
    let mut lengths = Vec::new();
    for (path, weights) in files.iter().zip(&maps) {
        let map = AttentionMap::new(weights).map_err(|e| tag(path, e))?;
        lengths.push(map.keys());
        reports.push(MapReport {
            file: path.display().to_string(),
            heads: map.heads(),
            queries: map.queries(),
            keys: map.keys(),
            metrics: AttentionReport::compute(&map).map_err(|e| tag(path, e))?,
        });
    }
    let per_map: Vec<HeadMetrics> = reports.iter().map(|r| r.metrics.mean).collect();
    emit_json(
        &CorpusAttention {
            mean: HeadMetrics::average(&per_map),
            metric_bounds: metric_bounds(&lengths)?,
            maps: reports,
        },
        out,
    )
}

fn unroll(input: &Path, input_length: Option<usize>, out: Option<&Path>) -> Result<()> {
    let p_prime = load_dumps(&[input])?.remove(0);
    let t = input_length.unwrap_or_else(|| p_prime.shape().first().copied().unwrap_or(0));
    let map = unroll_kernels(&p_prime, t).map_err(|e| tag(input, e))?;
    eprintln!(
        "unroll: {} placed + {} dropped = {} taps",
        map.placed(),
        map.dropped,
        map.total_taps
    );
    let mut w = sink(out)?;
    map.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn run(args: &Args) -> Result<Outcome> {
    match &args.mode {
        Mode::Offsets { layers, out } => offsets(layers, out.as_deref())?,
        Mode::Attention { inputs, out } => attention(inputs, out.as_deref())?,
        Mode::Unroll {
            input,
            input_length,
            out,
        } => unroll(input, *input_length, out.as_deref())?,
    }
    Ok(Outcome::Pass)
}
