use serde::{Deserialize, Serialize};

use super::{AppliedChanges, SystemState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostCoefficients {
    pub per_instance_change: f64,
    pub per_migration: f64,
    pub per_quota_unit: f64,
}

impl Default for CostCoefficients {
    fn default() -> Self {
        Self { per_instance_change: 0.01, per_migration: 0.02, per_quota_unit: 0.005 }
    }
}

impl CostCoefficients {
    pub fn cost(&self, c: &AppliedChanges) -> f64 {
        self.per_instance_change * (c.created + c.removed) as f64
            + self.per_migration * c.migrations as f64
            + self.per_quota_unit * c.quota_change
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub w_latency: f64,
    pub w_util: f64,
    pub w_cost: f64,
    pub target_latency_ms: f64,
    pub target_util: f64,
    pub cost: CostCoefficients,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            w_latency: 0.4,
            w_util: 0.35,
            w_cost: 0.25,
            target_latency_ms: 100.0,
            target_util: 0.7,
            cost: CostCoefficients::default(),
        }
    }
}

/// `-(w1·Σ T_i/T* + w2·Σ |u_j - u*| + w3·C)`.
pub fn reward_terms(latencies_ms: &[f64], utils: &[f64], cost: f64, spec: &RewardSpec) -> f64 {
    let lat: f64 = latencies_ms.iter().map(|t| t / spec.target_latency_ms).sum();
    let dev: f64 = utils.iter().map(|u| (u - spec.target_util).abs()).sum();
    -(spec.w_latency * lat + spec.w_util * dev + spec.w_cost * cost)
}

/// Reward for arriving in `after` via `changes`: per-service mean latency,
/// per-node CPU utilization, and the reconfiguration cost.
pub fn reward(after: &SystemState, changes: &AppliedChanges, spec: &RewardSpec) -> f64 {
    let lat: Vec<f64> = (0..after.services()).map(|s| after.latency_ms(s)).collect();
    let util: Vec<f64> = (0..after.nodes()).map(|j| after.node_util(j, 0)).collect();
    reward_terms(&lat, &util, spec.cost.cost(changes), spec)
}
