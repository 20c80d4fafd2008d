use serde::{Deserialize, Serialize};

/// Resources reported per node, in row order of `SystemState::utilization`.
pub const RESOURCES: [&str; 3] = ["cpu", "mem", "net"];

/// Full observation of the cluster after a tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub tick: u64,
    /// Requests that arrived this tick, per service.
    pub load: Vec<f64>,
    /// Node-major `[node][cpu, mem, net]` utilizations in `[0, 1]`.
    pub utilization: Vec<f64>,
    pub queue_len: Vec<f64>,
    /// Windowed mean and variance of per-service load: `[mean_0, var_0, mean_1, ...]`.
    pub history: Vec<f64>,
    /// Mean latency (ms) and completions per service: `[lat_0, thr_0, lat_1, ...]`.
    pub perf: Vec<f64>,
}

impl SystemState {
    pub fn zeros(services: usize, nodes: usize) -> Self {
        Self {
            tick: 0,
            load: vec![0.0; services],
            utilization: vec![0.0; nodes * RESOURCES.len()],
            queue_len: vec![0.0; services],
            history: vec![0.0; 2 * services],
            perf: vec![0.0; 2 * services],
        }
    }

    pub fn services(&self) -> usize {
        self.load.len()
    }

    pub fn nodes(&self) -> usize {
        self.utilization.len() / RESOURCES.len()
    }

    pub fn node_util(&self, node: usize, resource: usize) -> f64 {
        self.utilization[node * RESOURCES.len() + resource]
    }

    pub fn mean_util(&self, resource: usize) -> f64 {
        let n = self.nodes();
        if n == 0 {
            return 0.0;
        }
        (0..n).map(|j| self.node_util(j, resource)).sum::<f64>() / n as f64
    }

    pub fn latency_ms(&self, service: usize) -> f64 {
        self.perf[2 * service]
    }

    pub fn throughput(&self, service: usize) -> f64 {
        self.perf[2 * service + 1]
    }

    pub fn dim(&self) -> usize {
        self.load.len() + self.utilization.len() + self.queue_len.len() + self.history.len() + self.perf.len()
    }

    /// Concatenation in field order: load, utilization, queue, history, perf.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.load);
        v.extend_from_slice(&self.utilization);
        v.extend_from_slice(&self.queue_len);
        v.extend_from_slice(&self.history);
        v.extend_from_slice(&self.perf);
        v
    }

    /// Scaled feature vector for learned policies: loads and queues relative
    /// to `load_scale`, latencies relative to `latency_scale`, each squashed
    /// with `x/(1+x)` so every entry stays in `[0, 1)`.
    pub fn normalized(&self, load_scale: f64, latency_scale: f64) -> Vec<f64> {
        let sq = |x: f64| {
            let x = x.max(0.0);
            x / (1.0 + x)
        };
        let mut v = Vec::with_capacity(self.dim());
        v.extend(self.load.iter().map(|&x| sq(x / load_scale)));
        v.extend(self.utilization.iter().map(|&x| x.clamp(0.0, 1.0)));
        v.extend(self.queue_len.iter().map(|&x| sq(x / load_scale)));
        for pair in self.history.chunks(2) {
            v.push(sq(pair[0] / load_scale));
            v.push(sq(pair[1].sqrt() / load_scale));
        }
        for pair in self.perf.chunks(2) {
            v.push(sq(pair[0] / latency_scale));
            v.push(sq(pair[1] / load_scale));
        }
        v
    }
}

/// Four-number summary: mean CPU, memory, network utilization and load level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompactState {
    pub cpu: f64,
    pub mem: f64,
    pub net: f64,
    pub load: f64,
}

impl CompactState {
    pub fn to_array(self) -> [f64; 4] {
        [self.cpu, self.mem, self.net, self.load]
    }
}

/// Cluster-mean utilizations plus total queued requests relative to
/// `queue_reference`, all clamped to `[0, 1]`.
pub fn encode_compact_state(state: &SystemState, queue_reference: f64) -> CompactState {
    let q: f64 = state.queue_len.iter().sum();
    let load = if queue_reference > 0.0 { q / queue_reference } else { 0.0 };
    CompactState {
        cpu: state.mean_util(0).clamp(0.0, 1.0),
        mem: state.mean_util(1).clamp(0.0, 1.0),
        net: state.mean_util(2).clamp(0.0, 1.0),
        load: load.clamp(0.0, 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compact_state_of_known_snapshot() {
        let mut s = SystemState::zeros(2, 2);
        s.utilization = vec![0.2, 0.4, 0.1, 0.6, 0.8, 0.3];
        s.queue_len = vec![300.0, 200.0];
        let c = encode_compact_state(&s, 1000.0);
        assert!((c.cpu - 0.4).abs() < 1e-12);
        assert!((c.mem - 0.6).abs() < 1e-12);
        assert!((c.net - 0.2).abs() < 1e-12);
        assert!((c.load - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dims_follow_service_and_node_counts() {
        let s = SystemState::zeros(8, 4);
        assert_eq!(s.dim(), 8 + 12 + 8 + 16 + 16);
        assert_eq!(s.to_vec().len(), s.dim());
        assert!(s.normalized(100.0, 100.0).iter().all(|x| (0.0..1.0).contains(x)));
    }
}
