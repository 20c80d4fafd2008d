use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{latency::LatencyModel, ClusterError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    /// CPU-milliseconds available per tick.
    pub cpu_capacity: f64,
    pub mem_capacity: f64,
    /// MB transferable per tick.
    pub net_capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub name: String,
    pub mem_per_instance_mb: f64,
    /// Quota and priority given to instances created without explicit values.
    pub default_quota: f64,
    pub default_priority: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub service: usize,
    pub node: usize,
    pub quota: f64,
    pub priority: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Ticks of per-service load kept for the windowed history statistics.
    pub history_window: usize,
    /// Wall-clock length of a tick, used to turn queue waits into latency.
    pub tick_ms: f64,
    /// EWMA factor for reported utilizations; 0 reports raw values.
    pub util_smoothing: f64,
    /// An instance may borrow unallocated node CPU up to this multiple of its
    /// own quota.
    pub burst_ratio: f64,
    pub mem_per_request_mb: f64,
    /// Queue length that maps to load level 1 in the compact state.
    pub queue_reference: f64,
    pub min_quota: f64,
    pub max_instances_per_node: u32,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            history_window: 60,
            tick_ms: 1000.0,
            util_smoothing: 0.5,
            burst_ratio: 1.0,
            mem_per_request_mb: 0.05,
            queue_reference: 1000.0,
            min_quota: 0.01,
            max_instances_per_node: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    pub services: Vec<ServiceSpec>,
    pub placement: Vec<InstanceSpec>,
    #[serde(default)]
    pub latency: LatencyModel,
    #[serde(default)]
    pub sim: SimParams,
}

impl Topology {
    /// Eight trading services on `nodes` identical nodes, `per_service`
    /// instances each, placed round-robin with equal quotas filling
    /// `fill` of every node.
    pub fn uniform(nodes: usize, cpu_per_node: f64, per_service: usize, fill: f64) -> Self {
        Self::from_mix(&crate::workload::default_service_mix(), nodes, cpu_per_node, per_service, fill)
    }

    /// Like [`Topology::uniform`] for an arbitrary service catalog.
    pub fn from_mix(
        names: &[crate::workload::ServiceMix],
        nodes: usize,
        cpu_per_node: f64,
        per_service: usize,
        fill: f64,
    ) -> Self {
        let k = names.len();
        let total = k * per_service;
        let per_node = total.div_ceil(nodes);
        let quota = fill / per_node as f64;
        let services = names
            .iter()
            .map(|m| ServiceSpec {
                name: m.name.clone(),
                mem_per_instance_mb: 512.0,
                default_quota: quota,
                default_priority: 0.5,
            })
            .collect();
        let mut placement = Vec::with_capacity(total);
        let mut slot = 0;
        for _ in 0..per_service {
            for s in 0..k {
                placement.push(InstanceSpec { service: s, node: slot % nodes, quota, priority: 0.5 });
                slot += 1;
            }
        }
        Self {
            nodes: vec![
                NodeSpec { cpu_capacity: cpu_per_node, mem_capacity: 16_384.0, net_capacity: 125.0 };
                nodes
            ],
            services,
            placement,
            latency: LatencyModel::default(),
            sim: SimParams::default(),
        }
    }

    /// Instances of `instance_quota` each, sized per service so that `rate`
    /// requests per tick of `mix` load every instance to `target_util`,
    /// spread over `nodes` nodes by free quota.
    pub fn provisioned(
        mix: &[crate::workload::ServiceMix],
        rate: f64,
        nodes: usize,
        cpu_per_node: f64,
        instance_quota: f64,
        target_util: f64,
    ) -> Result<Self, ClusterError> {
        if nodes == 0 || !(instance_quota > 0.0 && instance_quota <= 1.0) || !(target_util > 0.0) || !(rate > 0.0) {
            return Err(ClusterError::InvalidTopology("provisioning parameters out of range".into()));
        }
        let wsum: f64 = mix.iter().map(|m| m.weight).sum();
        let inst_cap = instance_quota * cpu_per_node * target_util;
        let mut t = Self::from_mix(mix, nodes, cpu_per_node, 1, 1.0);
        t.placement.clear();
        let mut used = vec![0.0f64; nodes];
        for (s, m) in mix.iter().enumerate() {
            t.services[s].default_quota = instance_quota;
            let demand = rate * m.weight / wsum * m.work_units;
            let count = ((demand / inst_cap).ceil() as usize).max(1);
            for _ in 0..count {
                let j = (0..nodes)
                    .min_by(|&a, &b| used[a].total_cmp(&used[b]).then(a.cmp(&b)))
                    .expect("nodes > 0");
                if used[j] + instance_quota > 1.0 + 1e-9 {
                    return Err(ClusterError::InvalidTopology(format!(
                        "{} nodes cannot hold the instances needed for rate {rate}",
                        nodes
                    )));
                }
                used[j] += instance_quota;
                t.placement.push(InstanceSpec { service: s, node: j, quota: instance_quota, priority: 0.5 });
            }
        }
        Ok(t)
    }

    pub fn service_count(&self) -> usize {
        self.services.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn validate(&self) -> Result<(), ClusterError> {
        let bad = |m: String| Err(ClusterError::InvalidTopology(m));
        if self.nodes.is_empty() || self.services.is_empty() {
            return bad("need at least one node and one service".into());
        }
        for (j, n) in self.nodes.iter().enumerate() {
            if !(n.cpu_capacity > 0.0 && n.mem_capacity > 0.0 && n.net_capacity > 0.0) {
                return bad(format!("node {j} capacities must be > 0"));
            }
        }
        let mut per_service = vec![0usize; self.services.len()];
        let mut quota_sum = vec![0.0; self.nodes.len()];
        for (i, p) in self.placement.iter().enumerate() {
            if p.service >= self.services.len() || p.node >= self.nodes.len() {
                return bad(format!("placement {i} references unknown service/node"));
            }
            if !(p.quota > 0.0 && p.quota <= 1.0) || !(0.0..=1.0).contains(&p.priority) {
                return bad(format!("placement {i} quota must be in (0,1] and priority in [0,1]"));
            }
            per_service[p.service] += 1;
            quota_sum[p.node] += p.quota;
        }
        if let Some(s) = per_service.iter().position(|&c| c == 0) {
            return bad(format!("service {s} has no instance"));
        }
        if let Some(j) = quota_sum.iter().position(|&q| q > 1.0 + 1e-9) {
            return bad(format!("node {j} quotas sum to {} > 1", quota_sum[j]));
        }
        self.latency.validate().map_err(ClusterError::InvalidTopology)?;
        let sp = &self.sim;
        if sp.history_window == 0 || !(sp.tick_ms > 0.0) || !(0.0..1.0).contains(&sp.util_smoothing) || sp.burst_ratio < 0.0 {
            return bad("sim parameters out of range".into());
        }
        if !(sp.min_quota > 0.0 && sp.min_quota <= 1.0) || sp.max_instances_per_node == 0 {
            return bad("min_quota must be in (0,1] and max_instances_per_node > 0".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ClusterError> {
        let t: Self = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ClusterError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn total_cpu(&self) -> f64 {
        self.nodes.iter().map(|n| n.cpu_capacity).sum()
    }
}
