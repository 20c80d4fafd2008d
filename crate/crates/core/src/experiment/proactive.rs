use serde::{Deserialize, Serialize};

use crate::cluster::Cluster;
use crate::lstm::Forecast;
use crate::workload::{ServiceMix, Tick};

/// Scale-up ahead of predicted surges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProactiveConfig {
    /// Ticks between forecasts.
    pub check_every: Tick,
    /// Utilization the pre-provisioned instances should run at under the
    /// forecast load.
    pub target_util: f64,
    /// Upper bound on the forecast-to-recent load ratio acted upon.
    pub max_factor: f64,
    /// Ticks after a warning during which scale-in is suppressed.
    pub hold_ticks: Tick,
    /// Overrides the predictor's own burst threshold.
    pub burst_threshold: Option<f64>,
}

impl Default for ProactiveConfig {
    fn default() -> Self {
        Self { check_every: 5, target_util: 0.6, max_factor: 4.0, hold_ticks: 180, burst_threshold: None }
    }
}

/// Instances to add per service so the forecast load runs at
/// `target_util`. Never negative.
pub fn proactive_deltas(
    cluster: &Cluster,
    recent_load: &[f64],
    mix: &[ServiceMix],
    forecast: &Forecast,
    config: &ProactiveConfig,
) -> Vec<i32> {
    let factor = if forecast.baseline > 0.0 { (forecast.predicted / forecast.baseline).clamp(1.0, config.max_factor) } else { 1.0 };
    let topo = cluster.topology();
    let node_cpu = topo.total_cpu() / topo.node_count() as f64;
    (0..cluster.service_count())
        .map(|s| {
            let work = mix.get(s).map_or(0.0, |m| m.work_units);
            let demand = recent_load.get(s).copied().unwrap_or(0.0) * work * factor;
            let per_instance = cluster.service_quota()[s] * node_cpu * config.target_util;
            if !(per_instance > 0.0) {
                return 0;
            }
            let want = (demand / per_instance).ceil() as i64;
            (want - cluster.instance_count(s) as i64).clamp(0, i32::MAX as i64) as i32
        })
        .collect()
}
