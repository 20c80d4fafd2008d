//! Discrete-time cluster of nodes and service instances: request routing,
//! quota-limited processing with priority-weighted burst sharing, the
//! latency model, observation noise, rewards and the compact state view.

mod action;
mod latency;
mod reward;
mod sim;
mod state;
mod topology;
mod trace;

pub use action::{AppliedChanges, PlacementPlan, SchedulingAction};
pub use latency::{calibrate_jitter_sigma, LatencyModel, Z95};
pub use reward::{reward, reward_terms, CostCoefficients, RewardSpec};
pub use sim::{Cluster, InstanceView, NoiseSpec, RecordMode, RunTotals, StepOutcome};
pub use state::{encode_compact_state, CompactState, SystemState, RESOURCES};
pub use topology::{InstanceSpec, NodeSpec, ServiceSpec, SimParams, Topology};
pub use trace::{write_trace_csv, TraceRow, TRACE_HEADER};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("service count mismatch: topology has {topology}, workload has {workload}")]
    ServiceMismatch { topology: usize, workload: usize },
    #[error("topology io: {0}")]
    Io(#[from] std::io::Error),
    #[error("topology json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("trace csv: {0}")]
    Csv(#[from] csv::Error),
}
