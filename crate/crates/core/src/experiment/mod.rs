//! End-to-end runs: a scenario drives a cluster while a scheduler (and
//! optionally a load predictor) adjusts it every decision interval.

mod presets;
mod proactive;
mod run;
mod schedulers;

pub use presets::{
    calibration_topology, fit_reference_utilization, load_step_topology, market_open_scenario, market_open_topology,
    scaling_topology, tidal_burst_day, training_days, OPEN_TICK_MARKET, OPEN_TICK_TIDAL,
};
pub use proactive::{proactive_deltas, ProactiveConfig};
pub use run::{
    run_experiment, write_decisions_csv, CacheSettings, DecisionRecord, DecisionSource, RunConfig, RunOutput,
};
pub use schedulers::{
    DecisionContext, DrlScheduler, DrlSchedulerConfig, HybridScheduler, HybridSchedulerConfig, RandomScheduler,
    Scheduler, SchedulerKind, StaticRoundRobin, ThresholdAutoscaler, ThresholdConfig,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Cluster(#[from] crate::cluster::ClusterError),
    #[error(transparent)]
    Workload(#[from] crate::workload::WorkloadError),
    #[error(transparent)]
    Hybrid(#[from] crate::hybrid::HybridError),
    #[error(transparent)]
    Drl(#[from] crate::drl::DrlError),
    #[error(transparent)]
    Predictor(#[from] crate::lstm::LstmError),
    #[error(transparent)]
    Cache(#[from] crate::cache::CacheError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
