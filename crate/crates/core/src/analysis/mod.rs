//! Offset statistics, deformed-kernel unrolling, and attention-spread metrics.

mod attention;
mod boxplot;
mod corpus;
mod unroll;

pub use attention::{
    diagonality, farthest_key_diagonality, globalness, metric_bounds, verticality, AttentionMap,
    AttentionReport, HeadMetrics, MetricBounds, ROW_SUM_TOLERANCE,
};
pub use boxplot::{offset_boxplot, quantile_sorted, OffsetStats, WHISKER_IQR};
pub use corpus::{corpus_aggregate, load_dumps};
pub use unroll::{unroll_kernels, UnrollMap};
