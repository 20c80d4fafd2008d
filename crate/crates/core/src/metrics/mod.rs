//! Latency statistics, lognormal fitting, run summaries and cross-run
//! comparison tables.

mod compare;
mod stats;

pub use compare::{compare_runs, write_comparison_csv, Direction, MetricDelta, RunSummary};
pub use stats::{
    fit_lognormal, ks_critical_value, ks_statistic, percentile_sorted, percentiles, LatencyStats,
    LognormalFit,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no samples")]
    Empty,
    #[error("percentile level {0} outside (0, 1)")]
    InvalidLevel(f64),
    #[error("sample {0} is not positive")]
    NonPositive(f64),
    #[error("runs come from different scenarios: {baseline} vs {candidate}")]
    ScenarioMismatch { baseline: String, candidate: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
