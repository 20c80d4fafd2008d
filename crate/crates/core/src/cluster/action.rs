use serde::{Deserialize, Serialize};

/// Incremental scheduling decision.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SchedulingAction {
    /// Per-service instance count change.
    pub instance_delta: Vec<i32>,
    /// Service-major `[service][node]` flags: move one instance of the
    /// service onto the node.
    pub migration: Vec<bool>,
    /// New per-service priority in `[0, 1]`.
    pub priority: Option<Vec<f64>>,
    /// New per-service CPU quota in `(0, 1]`.
    pub quota: Option<Vec<f64>>,
    /// Full target placement; when present it supersedes the fields above.
    pub target_placement: Option<PlacementPlan>,
}

impl SchedulingAction {
    pub fn noop() -> Self {
        Self::default()
    }

    pub fn is_noop(&self) -> bool {
        self.instance_delta.iter().all(|&d| d == 0)
            && !self.migration.iter().any(|&m| m)
            && self.priority.is_none()
            && self.quota.is_none()
            && self.target_placement.is_none()
    }
}

/// Target instance counts per (service, node) with per-service quota and
/// priority.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub services: usize,
    pub nodes: usize,
    /// Service-major `[service][node]` instance counts.
    pub counts: Vec<u32>,
    pub quota: Vec<f64>,
    pub priority: Vec<f64>,
}

impl PlacementPlan {
    pub fn count(&self, service: usize, node: usize) -> u32 {
        self.counts[service * self.nodes + node]
    }

    pub fn service_total(&self, service: usize) -> u32 {
        self.counts[service * self.nodes..(service + 1) * self.nodes].iter().sum()
    }

    /// Quota demanded on each node.
    pub fn node_quota(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.nodes];
        for s in 0..self.services {
            for (j, qj) in q.iter_mut().enumerate() {
                *qj += self.count(s, j) as f64 * self.quota[s];
            }
        }
        q
    }
}

/// What a step actually changed, after sanitization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AppliedChanges {
    pub created: u32,
    pub removed: u32,
    pub migrations: u32,
    /// Sum over services of |Δquota|.
    pub quota_change: f64,
    /// Fields clamped or dropped to keep the cluster feasible.
    pub sanitized: u32,
}

impl AppliedChanges {
    pub fn merge(&mut self, o: AppliedChanges) {
        self.created += o.created;
        self.removed += o.removed;
        self.migrations += o.migrations;
        self.quota_change += o.quota_change;
        self.sanitized += o.sanitized;
    }
}
