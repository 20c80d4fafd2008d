use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    AppliedChanges, ClusterError, PlacementPlan, SchedulingAction, SystemState, Topology, TraceRow,
    RESOURCES,
};
use crate::metrics::percentile_sorted;
use crate::workload::{Request, Tick};

/// Weight added to priority so zero-priority instances still get a share.
const PRIORITY_FLOOR: f64 = 0.01;
const BURST_ROUNDS: usize = 8;
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
struct Pending {
    arrival: Tick,
    remaining: f64,
    payload: u32,
}

#[derive(Debug, Clone)]
struct Instance {
    id: u64,
    service: usize,
    node: usize,
    quota: f64,
    priority: f64,
    queue: VecDeque<Pending>,
    backlog: f64,
    /// Utilization over the previous tick; drives contention for requests
    /// completing in the current one.
    rho: f64,
    util_smooth: f64,
    used: f64,
}

impl Instance {
    fn new(id: u64, service: usize, node: usize, quota: f64, priority: f64) -> Self {
        Self {
            id,
            service,
            node,
            quota,
            priority,
            queue: VecDeque::new(),
            backlog: 0.0,
            rho: 0.0,
            util_smooth: 0.0,
            used: 0.0,
        }
    }

    fn weight(&self) -> f64 {
        self.priority + PRIORITY_FLOOR
    }
}

/// Read-only snapshot of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceView {
    pub id: u64,
    pub service: usize,
    pub node: usize,
    pub quota: f64,
    pub priority: f64,
    pub queue_len: usize,
    pub backlog_ms: f64,
    pub utilization: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordMode {
    #[default]
    Off,
    /// Keep every completed request's latency.
    Latencies,
    /// Latencies plus per-service trace rows every tick.
    Trace,
}

/// Gaussian noise added to observed utilizations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub util_std: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub changes: AppliedChanges,
    pub completed: u64,
    pub latency_sum_ms: f64,
    pub cpu_used: f64,
    pub cpu_guaranteed: f64,
}

#[derive(Debug, Clone, Default)]
struct Recorder {
    mode: RecordMode,
    latencies: Vec<f64>,
    trace: Vec<TraceRow>,
    tick_samples: Vec<Vec<f64>>,
}

/// Per-tick aggregates, reused across ticks.
#[derive(Debug, Clone, Default)]
struct TickAgg {
    done: Vec<u64>,
    lat_sum: Vec<f64>,
    payload_mb: Vec<f64>,
    node_payload_mb: Vec<f64>,
}

impl TickAgg {
    fn reset(&mut self, k: usize, n: usize) {
        self.done.clear();
        self.done.resize(k, 0);
        self.lat_sum.clear();
        self.lat_sum.resize(k, 0.0);
        self.payload_mb.clear();
        self.payload_mb.resize(k, 0.0);
        self.node_payload_mb.clear();
        self.node_payload_mb.resize(n, 0.0);
    }
}

/// Running totals since construction (or since the last fork).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTotals {
    pub generated: u64,
    pub completed: u64,
    pub latency_sum_ms: f64,
    pub cpu_used: f64,
    pub cpu_allocated: f64,
    pub sanitized: u64,
    pub ticks: u64,
}

pub struct Cluster {
    topo: Topology,
    instances: Vec<Instance>,
    next_id: u64,
    svc_quota: Vec<f64>,
    svc_priority: Vec<f64>,
    hit_rate: Vec<f64>,
    tick: Tick,
    window: VecDeque<Vec<f64>>,
    smooth: Vec<[f64; 3]>,
    truth: SystemState,
    observed: SystemState,
    totals: RunTotals,
    agg: TickAgg,
    rec: Recorder,
}

impl Cluster {
    pub fn new(topo: Topology) -> Result<Self, ClusterError> {
        topo.validate()?;
        let k = topo.service_count();
        let n = topo.node_count();
        let mut instances = Vec::with_capacity(topo.placement.len());
        for (i, p) in topo.placement.iter().enumerate() {
            instances.push(Instance::new(i as u64, p.service, p.node, p.quota, p.priority));
        }
        let svc_quota = topo.services.iter().map(|s| s.default_quota).collect();
        let svc_priority = topo.services.iter().map(|s| s.default_priority).collect();
        let mut c = Self {
            next_id: instances.len() as u64,
            instances,
            svc_quota,
            svc_priority,
            hit_rate: vec![0.0; k],
            tick: 0,
            window: VecDeque::with_capacity(topo.sim.history_window + 1),
            smooth: vec![[0.0; 3]; n],
            truth: SystemState::zeros(k, n),
            observed: SystemState::zeros(k, n),
            totals: RunTotals::default(),
            agg: TickAgg::default(),
            rec: Recorder::default(),
            topo,
        };
        c.refresh_static_observation();
        Ok(c)
    }

    /// Independent copy for what-if rollouts: same instances, queues and
    /// observations, with fresh totals and recording off.
    pub fn fork(&self) -> Self {
        Self {
            topo: self.topo.clone(),
            instances: self.instances.clone(),
            next_id: self.next_id,
            svc_quota: self.svc_quota.clone(),
            svc_priority: self.svc_priority.clone(),
            hit_rate: self.hit_rate.clone(),
            tick: self.tick,
            window: self.window.clone(),
            smooth: self.smooth.clone(),
            truth: self.truth.clone(),
            observed: self.observed.clone(),
            totals: RunTotals::default(),
            agg: TickAgg::default(),
            rec: Recorder::default(),
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn tick(&self) -> Tick {
        self.tick
    }

    pub fn service_count(&self) -> usize {
        self.topo.service_count()
    }

    pub fn node_count(&self) -> usize {
        self.topo.node_count()
    }

    pub fn set_record_mode(&mut self, mode: RecordMode) {
        self.rec.mode = mode;
    }

    pub fn latencies(&self) -> &[f64] {
        &self.rec.latencies
    }

    pub fn take_latencies(&mut self) -> Vec<f64> {
        std::mem::take(&mut self.rec.latencies)
    }

    pub fn trace_rows(&self) -> &[TraceRow] {
        &self.rec.trace
    }

    pub fn totals(&self) -> RunTotals {
        self.totals
    }

    pub fn set_hit_rates(&mut self, rates: &[f64]) {
        for (h, &r) in self.hit_rate.iter_mut().zip(rates) {
            *h = r.clamp(0.0, 1.0);
        }
    }

    pub fn hit_rates(&self) -> &[f64] {
        &self.hit_rate
    }

    /// Observation as a policy would see it, including noise.
    pub fn observe_state(&self) -> SystemState {
        self.observed.clone()
    }

    pub fn state(&self) -> &SystemState {
        &self.observed
    }

    /// Noise-free state.
    pub fn true_state(&self) -> &SystemState {
        &self.truth
    }

    pub fn instances(&self) -> Vec<InstanceView> {
        self.instances
            .iter()
            .map(|i| InstanceView {
                id: i.id,
                service: i.service,
                node: i.node,
                quota: i.quota,
                priority: i.priority,
                queue_len: i.queue.len(),
                backlog_ms: i.backlog,
                utilization: i.util_smooth,
            })
            .collect()
    }

    pub fn instance_count(&self, service: usize) -> usize {
        self.instances.iter().filter(|i| i.service == service).count()
    }

    pub fn service_quota(&self) -> &[f64] {
        &self.svc_quota
    }

    pub fn service_priority(&self) -> &[f64] {
        &self.svc_priority
    }

    /// Smoothed mean utilization of a service's instances.
    pub fn service_utilization(&self, service: usize) -> f64 {
        let (sum, n) = self
            .instances
            .iter()
            .filter(|i| i.service == service)
            .fold((0.0, 0usize), |(s, n), i| (s + i.util_smooth, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    pub fn node_quota(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.node_count()];
        for i in &self.instances {
            q[i.node] += i.quota;
        }
        q
    }

    pub fn queued(&self) -> u64 {
        self.instances.iter().map(|i| i.queue.len() as u64).sum()
    }

    pub fn queued_for(&self, service: usize) -> u64 {
        self.instances.iter().filter(|i| i.service == service).map(|i| i.queue.len() as u64).sum()
    }

    /// Sum over queued requests of their age in milliseconds.
    pub fn queued_age_ms(&self) -> f64 {
        let tick_ms = self.topo.sim.tick_ms;
        self.instances
            .iter()
            .flat_map(|i| i.queue.iter())
            .map(|p| (self.tick.saturating_sub(p.arrival)) as f64 * tick_ms)
            .sum()
    }

    /// Age in milliseconds of every queued request.
    pub fn queued_ages_ms(&self) -> Vec<f64> {
        let tick_ms = self.topo.sim.tick_ms;
        self.instances
            .iter()
            .flat_map(|i| i.queue.iter())
            .map(|p| (self.tick.saturating_sub(p.arrival)) as f64 * tick_ms)
            .collect()
    }

    pub fn placement_plan(&self) -> PlacementPlan {
        let (k, n) = (self.service_count(), self.node_count());
        let mut counts = vec![0u32; k * n];
        for i in &self.instances {
            counts[i.service * n + i.node] += 1;
        }
        PlacementPlan {
            services: k,
            nodes: n,
            counts,
            quota: self.svc_quota.clone(),
            priority: self.svc_priority.clone(),
        }
    }

    /// Advance one tick: apply `action`, admit `arrivals`, process queues
    /// and refresh observations.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        action: &SchedulingAction,
        arrivals: &[Request],
        noise: &NoiseSpec,
        rng: &mut R,
    ) -> StepOutcome {
        let k = self.service_count();
        let n = self.node_count();
        let changes = self.apply_action(action);
        self.totals.sanitized += changes.sanitized as u64;

        let mut load = vec![0.0; k];
        for r in arrivals {
            let s = r.service_id % k;
            load[s] += 1.0;
            self.route(
                s,
                Pending { arrival: self.tick, remaining: r.work_units.max(0.0), payload: r.payload_bytes },
            );
        }
        self.totals.generated += arrivals.len() as u64;

        self.agg.reset(k, n);
        if self.rec.mode == RecordMode::Trace {
            self.rec.tick_samples.resize_with(k, Vec::new);
            self.rec.tick_samples.iter_mut().for_each(Vec::clear);
        }
        let (used, guaranteed) = self.process(rng);

        let done: u64 = self.agg.done.iter().sum();
        let lat_sum: f64 = self.agg.lat_sum.iter().sum();
        self.totals.completed += done;
        self.totals.latency_sum_ms += lat_sum;
        self.totals.cpu_used += used;
        self.totals.cpu_allocated += guaranteed;
        self.totals.ticks += 1;

        self.update_observation(load, noise, rng);
        self.tick += 1;
        StepOutcome { changes, completed: done, latency_sum_ms: lat_sum, cpu_used: used, cpu_guaranteed: guaranteed }
    }

    fn route(&mut self, service: usize, p: Pending) {
        let mut best = usize::MAX;
        let mut best_score = f64::INFINITY;
        for (idx, inst) in self.instances.iter().enumerate() {
            if inst.service != service {
                continue;
            }
            let cap = inst.quota * self.topo.nodes[inst.node].cpu_capacity;
            let score = (inst.backlog + p.remaining) / cap.max(EPS);
            if score < best_score {
                best_score = score;
                best = idx;
            }
        }
        let inst = &mut self.instances[best];
        inst.backlog += p.remaining;
        inst.queue.push_back(p);
    }

    /// Returns (CPU used, CPU guaranteed) summed over nodes.
    fn process<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (f64, f64) {
        let Self { topo, instances, hit_rate, agg, rec, tick, .. } = self;
        let n = topo.node_count();
        let mut by_node: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (idx, i) in instances.iter().enumerate() {
            by_node[i.node].push(idx);
        }
        let ctx = DrainCtx { topo, hit_rate, tick: *tick };
        let mut total_used = 0.0;
        let mut total_guaranteed = 0.0;
        let mut limit = Vec::new();
        let mut active = Vec::new();
        for (j, ids) in by_node.iter().enumerate() {
            let cap = topo.nodes[j].cpu_capacity;
            let quota_sum: f64 = ids.iter().map(|&i| instances[i].quota).sum();
            let w_sum: f64 = ids.iter().map(|&i| instances[i].weight()).sum();
            let pool0 = (1.0 - quota_sum).max(0.0) * cap;

            for &i in ids {
                let inst = &mut instances[i];
                let b = inst.quota * cap;
                inst.used = drain(inst, b, &ctx, agg, rec, rng);
                total_guaranteed += b;
            }

            limit.clear();
            limit.extend(ids.iter().map(|&i| topo.sim.burst_ratio * instances[i].quota * cap));
            active.clear();
            active.extend((0..ids.len()).filter(|&a| instances[ids[a]].backlog > EPS && limit[a] > EPS));
            let mut pool = pool0;
            for _ in 0..BURST_ROUNDS {
                if pool <= EPS || active.is_empty() {
                    break;
                }
                let tw: f64 = active.iter().map(|&a| instances[ids[a]].weight()).sum();
                let mut spent = 0.0;
                active.retain(|&a| {
                    let inst = &mut instances[ids[a]];
                    let share = (pool * inst.weight() / tw).min(limit[a]);
                    let u = drain(inst, share, &ctx, agg, rec, rng);
                    inst.used += u;
                    limit[a] -= u;
                    spent += u;
                    inst.backlog > EPS && limit[a] > EPS
                });
                pool -= spent;
            }

            for &i in ids {
                let inst = &mut instances[i];
                let b = inst.quota * cap;
                let burst = (topo.sim.burst_ratio * b).min(pool0 * inst.weight() / w_sum.max(EPS));
                let denom = b + burst;
                inst.rho = if denom > 0.0 { (inst.used / denom).clamp(0.0, 1.0) } else { 0.0 };
                let a = topo.sim.util_smoothing;
                inst.util_smooth = a * inst.util_smooth + (1.0 - a) * inst.rho;
                total_used += inst.used;
            }
        }
        (total_used, total_guaranteed)
    }

    fn update_observation<R: Rng + ?Sized>(&mut self, load: Vec<f64>, noise: &NoiseSpec, rng: &mut R) {
        let k = self.service_count();
        let n = self.node_count();
        let sim = &self.topo.sim;
        let tick_ms = sim.tick_ms;

        let mut raw = vec![[0.0f64; 3]; n];
        let mut svc_used = vec![0.0; k];
        let mut svc_alloc = vec![0.0; k];
        let mut svc_mem = vec![0.0; k];
        let mut queue_len = vec![0.0; k];
        let mut head_age = vec![0.0f64; k];
        for inst in &self.instances {
            let node = &self.topo.nodes[inst.node];
            let mem = self.topo.services[inst.service].mem_per_instance_mb
                + inst.queue.len() as f64 * sim.mem_per_request_mb;
            raw[inst.node][0] += inst.used / node.cpu_capacity;
            raw[inst.node][1] += mem / node.mem_capacity;
            svc_used[inst.service] += inst.used;
            svc_alloc[inst.service] += inst.quota * node.cpu_capacity;
            svc_mem[inst.service] += mem;
            queue_len[inst.service] += inst.queue.len() as f64;
            if let Some(p) = inst.queue.front() {
                head_age[inst.service] = head_age[inst.service].max((self.tick - p.arrival) as f64 * tick_ms);
            }
        }
        for (j, r) in raw.iter_mut().enumerate() {
            r[2] = self.agg.node_payload_mb[j] / self.topo.nodes[j].net_capacity;
        }

        let a = sim.util_smoothing;
        let mut util = Vec::with_capacity(n * RESOURCES.len());
        for (s, r) in self.smooth.iter_mut().zip(&raw) {
            for c in 0..3 {
                s[c] = a * s[c] + (1.0 - a) * r[c].clamp(0.0, 1.0);
                util.push(s[c]);
            }
        }

        self.window.push_back(load.clone());
        if self.window.len() > sim.history_window {
            self.window.pop_front();
        }
        let w = self.window.len() as f64;
        let mut history = vec![0.0; 2 * k];
        for s in 0..k {
            let mean = self.window.iter().map(|v| v[s]).sum::<f64>() / w;
            let var = self.window.iter().map(|v| (v[s] - mean).powi(2)).sum::<f64>() / w;
            history[2 * s] = mean;
            history[2 * s + 1] = var;
        }

        let base = self.topo.latency.base_latency(0.0, 0.0);
        let mut perf = vec![0.0; 2 * k];
        for s in 0..k {
            let d = self.agg.done[s];
            perf[2 * s] = if d > 0 {
                self.agg.lat_sum[s] / d as f64
            } else if queue_len[s] > 0.0 {
                head_age[s] + base
            } else {
                0.0
            };
            perf[2 * s + 1] = d as f64;
        }

        if self.rec.mode == RecordMode::Trace {
            let mem_total: f64 = self.topo.nodes.iter().map(|x| x.mem_capacity).sum();
            let net_total: f64 = self.topo.nodes.iter().map(|x| x.net_capacity).sum();
            for s in 0..k {
                let samples = &mut self.rec.tick_samples[s];
                samples.sort_unstable_by(f64::total_cmp);
                let (p50, p95) = if samples.is_empty() {
                    (0.0, 0.0)
                } else {
                    (percentile_sorted(samples, 0.50), percentile_sorted(samples, 0.95))
                };
                self.rec.trace.push(TraceRow {
                    tick: self.tick,
                    service_id: s,
                    completed: self.agg.done[s],
                    p50_ms: p50,
                    p95_ms: p95,
                    util_cpu: if svc_alloc[s] > 0.0 { svc_used[s] / svc_alloc[s] } else { 0.0 },
                    util_mem: svc_mem[s] / mem_total,
                    util_net: self.agg.payload_mb[s] / net_total,
                    queue_len: queue_len[s] as u64,
                });
            }
        }

        self.truth = SystemState { tick: self.tick, load, utilization: util, queue_len, history, perf };
        self.observed = self.truth.clone();
        if noise.util_std > 0.0 {
            let dist = Normal::new(0.0, noise.util_std).expect("finite std");
            for u in &mut self.observed.utilization {
                *u = (*u + dist.sample(rng)).clamp(0.0, 1.0);
            }
        }
    }

    /// Memory utilization of idle instances, so the state is meaningful
    /// before the first tick.
    fn refresh_static_observation(&mut self) {
        let n = self.node_count();
        let mut mem = vec![0.0; n];
        for inst in &self.instances {
            mem[inst.node] += self.topo.services[inst.service].mem_per_instance_mb;
        }
        for j in 0..n {
            let m = (mem[j] / self.topo.nodes[j].mem_capacity).clamp(0.0, 1.0);
            self.smooth[j][1] = m;
            self.truth.utilization[j * 3 + 1] = m;
        }
        self.observed = self.truth.clone();
    }

    fn apply_action(&mut self, a: &SchedulingAction) -> AppliedChanges {
        let mut ch = AppliedChanges::default();
        let mut orphans = Vec::new();
        if let Some(plan) = &a.target_placement {
            self.apply_plan(plan, &mut ch, &mut orphans);
        } else {
            self.apply_incremental(a, &mut ch, &mut orphans);
        }
        self.enforce_node_quota(&mut ch);
        for (s, p) in orphans {
            self.route(s, p);
        }
        ch
    }

    fn apply_incremental(&mut self, a: &SchedulingAction, ch: &mut AppliedChanges, orphans: &mut Vec<(usize, Pending)>) {
        let k = self.service_count();
        let n = self.node_count();
        if let Some(p) = &a.priority {
            if p.len() == k {
                for (s, &v) in p.iter().enumerate() {
                    self.set_priority(s, v, ch);
                }
            } else {
                ch.sanitized += 1;
            }
        }
        if let Some(q) = &a.quota {
            if q.len() == k {
                for (s, &v) in q.iter().enumerate() {
                    self.set_quota(s, v, ch);
                }
            } else {
                ch.sanitized += 1;
            }
        }
        if !a.migration.is_empty() {
            if a.migration.len() == k * n {
                for s in 0..k {
                    for j in 0..n {
                        if a.migration[s * n + j] {
                            self.migrate_one(s, j, ch);
                        }
                    }
                }
            } else {
                ch.sanitized += 1;
            }
        }
        if !a.instance_delta.is_empty() {
            if a.instance_delta.len() == k {
                for (s, &d) in a.instance_delta.iter().enumerate() {
                    for _ in 0..d.max(0) {
                        if !self.add_instance(s, None, ch) {
                            break;
                        }
                    }
                    for _ in 0..(-d).max(0) {
                        if !self.remove_instance(s, None, ch, orphans) {
                            break;
                        }
                    }
                }
            } else {
                ch.sanitized += 1;
            }
        }
    }

    fn apply_plan(&mut self, plan: &PlacementPlan, ch: &mut AppliedChanges, orphans: &mut Vec<(usize, Pending)>) {
        let k = self.service_count();
        let n = self.node_count();
        if plan.services != k
            || plan.nodes != n
            || plan.counts.len() != k * n
            || plan.quota.len() != k
            || plan.priority.len() != k
        {
            ch.sanitized += 1;
            return;
        }
        let mut targets: Vec<Vec<u32>> = (0..k).map(|s| (0..n).map(|j| plan.count(s, j)).collect()).collect();
        for (s, target) in targets.iter_mut().enumerate() {
            if target.iter().all(|&t| t == 0) {
                let keep = self.instances.iter().find(|i| i.service == s).map_or(0, |i| i.node);
                target[keep] = 1;
                ch.sanitized += 1;
            }
        }
        let max_per_node = self.topo.sim.max_instances_per_node;
        if (0..n).any(|j| targets.iter().map(|t| t[j]).sum::<u32>() > max_per_node) {
            ch.sanitized += 1;
            return;
        }
        for (s, target) in targets.into_iter().enumerate() {
            self.set_priority(s, plan.priority[s], ch);
            self.set_quota(s, plan.quota[s], ch);
            let mut cur = vec![0u32; n];
            for i in self.instances.iter().filter(|i| i.service == s) {
                cur[i.node] += 1;
            }
            let mut surplus = Vec::new();
            let mut deficit = Vec::new();
            for j in 0..n {
                for _ in target[j]..cur[j] {
                    surplus.push(j);
                }
                for _ in cur[j]..target[j] {
                    deficit.push(j);
                }
            }
            let pairs = surplus.len().min(deficit.len());
            for (&from, &to) in surplus.iter().zip(&deficit) {
                self.move_instance(s, from, to);
                ch.migrations += 1;
            }
            // Create before removing so the service never drops to zero.
            for &to in &deficit[pairs..] {
                self.add_instance(s, Some(to), ch);
            }
            for &from in &surplus[pairs..] {
                self.remove_instance(s, Some(from), ch, orphans);
            }
        }
    }

    fn set_priority(&mut self, s: usize, v: f64, ch: &mut AppliedChanges) {
        let c = if v.is_finite() { v.clamp(0.0, 1.0) } else { self.svc_priority[s] };
        if c != v {
            ch.sanitized += 1;
        }
        self.svc_priority[s] = c;
        for i in self.instances.iter_mut().filter(|i| i.service == s) {
            i.priority = c;
        }
    }

    fn set_quota(&mut self, s: usize, v: f64, ch: &mut AppliedChanges) {
        let c = if v.is_finite() { v.clamp(self.topo.sim.min_quota, 1.0) } else { self.svc_quota[s] };
        if c != v {
            ch.sanitized += 1;
        }
        let changed = self.instances.iter().any(|i| i.service == s && (i.quota - c).abs() > EPS)
            || (self.svc_quota[s] - c).abs() > EPS;
        if changed {
            ch.quota_change += (c - self.svc_quota[s]).abs();
        }
        self.svc_quota[s] = c;
        for i in self.instances.iter_mut().filter(|i| i.service == s) {
            i.quota = c;
        }
    }

    fn node_instances(&self, node: usize) -> u32 {
        self.instances.iter().filter(|i| i.node == node).count() as u32
    }

    /// Adds an instance on `node`, or on the node with the most free quota.
    fn add_instance(&mut self, s: usize, node: Option<usize>, ch: &mut AppliedChanges) -> bool {
        let quota = self.node_quota();
        let max_per_node = self.topo.sim.max_instances_per_node;
        let target = match node {
            Some(j) => Some(j),
            None => (0..self.node_count())
                .filter(|&j| self.node_instances(j) < max_per_node)
                .max_by(|&a, &b| (1.0 - quota[a]).total_cmp(&(1.0 - quota[b])).then(b.cmp(&a))),
        };
        let Some(j) = target else {
            ch.sanitized += 1;
            return false;
        };
        if node.is_none() {
            let free = 1.0 - quota[j];
            if free < self.topo.sim.min_quota - EPS {
                ch.sanitized += 1;
                return false;
            }
        }
        let inst = Instance::new(self.next_id, s, j, self.svc_quota[s], self.svc_priority[s]);
        self.next_id += 1;
        self.instances.push(inst);
        ch.created += 1;
        true
    }

    /// Removes the least backlogged instance of `s` from `node`, or from the
    /// node carrying the most quota. Keeps at least one instance.
    fn remove_instance(
        &mut self,
        s: usize,
        node: Option<usize>,
        ch: &mut AppliedChanges,
        orphans: &mut Vec<(usize, Pending)>,
    ) -> bool {
        if self.instance_count(s) <= 1 {
            ch.sanitized += 1;
            return false;
        }
        let quota = self.node_quota();
        let pick = self
            .instances
            .iter()
            .enumerate()
            .filter(|(_, i)| i.service == s && node.is_none_or(|j| i.node == j))
            .min_by(|(_, a), (_, b)| {
                quota[b.node].total_cmp(&quota[a.node]).then(a.backlog.total_cmp(&b.backlog))
            })
            .map(|(idx, _)| idx);
        let Some(idx) = pick else {
            ch.sanitized += 1;
            return false;
        };
        let inst = self.instances.remove(idx);
        orphans.extend(inst.queue.into_iter().map(|p| (s, p)));
        ch.removed += 1;
        true
    }

    fn move_instance(&mut self, s: usize, from: usize, to: usize) {
        if let Some(inst) = self
            .instances
            .iter_mut()
            .filter(|i| i.service == s && i.node == from)
            .min_by(|a, b| a.backlog.total_cmp(&b.backlog))
        {
            inst.node = to;
        }
    }

    /// Moves one instance of `s` onto `to` from the node hosting most of them.
    fn migrate_one(&mut self, s: usize, to: usize, ch: &mut AppliedChanges) {
        let n = self.node_count();
        let mut cur = vec![0u32; n];
        for i in self.instances.iter().filter(|i| i.service == s) {
            cur[i.node] += 1;
        }
        let from = (0..n).filter(|&j| j != to && cur[j] > 0).max_by(|&a, &b| cur[a].cmp(&cur[b]).then(b.cmp(&a)));
        match from {
            Some(f) if self.node_instances(to) < self.topo.sim.max_instances_per_node => {
                self.move_instance(s, f, to);
                ch.migrations += 1;
            }
            _ => ch.sanitized += 1,
        }
    }

    /// Scales instance quotas on over-committed nodes so each sums to 1.
    fn enforce_node_quota(&mut self, ch: &mut AppliedChanges) {
        let quota = self.node_quota();
        for (j, &q) in quota.iter().enumerate() {
            if q > 1.0 + EPS {
                ch.sanitized += 1;
                let f = 1.0 / q;
                for i in self.instances.iter_mut().filter(|i| i.node == j) {
                    i.quota *= f;
                }
            }
        }
    }
}

struct DrainCtx<'a> {
    topo: &'a Topology,
    hit_rate: &'a [f64],
    tick: Tick,
}

/// Serves queued work FIFO with `budget` CPU-ms, recording completions.
/// Returns the CPU actually used.
fn drain<R: Rng + ?Sized>(
    inst: &mut Instance,
    budget: f64,
    ctx: &DrainCtx<'_>,
    agg: &mut TickAgg,
    rec: &mut Recorder,
    rng: &mut R,
) -> f64 {
    let mut left = budget;
    let mut used = 0.0;
    let model = &ctx.topo.latency;
    let tick_ms = ctx.topo.sim.tick_ms;
    let s = inst.service;
    let base = model.base_latency(inst.rho, ctx.hit_rate[s]);
    while left > EPS {
        let Some(front) = inst.queue.front_mut() else { break };
        if front.remaining <= left + EPS {
            let w = front.remaining;
            left -= w;
            used += w;
            let p = inst.queue.pop_front().expect("front exists");
            let wait = (ctx.tick - p.arrival) as f64 * tick_ms;
            let lat = wait + base * model.jitter(rng);
            agg.done[s] += 1;
            agg.lat_sum[s] += lat;
            let mb = p.payload as f64 / 1.0e6;
            agg.payload_mb[s] += mb;
            agg.node_payload_mb[inst.node] += mb;
            match rec.mode {
                RecordMode::Off => {}
                RecordMode::Latencies => rec.latencies.push(lat),
                RecordMode::Trace => {
                    rec.latencies.push(lat);
                    rec.tick_samples[s].push(lat);
                }
            }
        } else {
            front.remaining -= left;
            used += left;
            left = 0.0;
        }
    }
    inst.backlog = if inst.queue.is_empty() { 0.0 } else { (inst.backlog - used).max(0.0) };
    used
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{InstanceSpec, NodeSpec, ServiceSpec, SimParams};
    use crate::rng::rng_for;

    fn one_service(cpu: f64, quota: f64) -> Topology {
        let mut latency = crate::cluster::LatencyModel::default();
        latency.jitter_enabled = false;
        Topology {
            nodes: vec![NodeSpec { cpu_capacity: cpu, mem_capacity: 1024.0, net_capacity: 10.0 }],
            services: vec![ServiceSpec {
                name: "svc".into(),
                mem_per_instance_mb: 128.0,
                default_quota: quota,
                default_priority: 0.5,
            }],
            placement: vec![InstanceSpec { service: 0, node: 0, quota, priority: 0.5 }],
            latency,
            sim: SimParams { util_smoothing: 0.0, burst_ratio: 0.0, ..SimParams::default() },
        }
    }

    fn req(t: Tick, work: f64) -> Request {
        Request { arrival_tick: t, service_id: 0, work_units: work, payload_bytes: 100 }
    }

    #[test]
    fn idle_step_leaves_queues_empty() {
        let mut c = Cluster::new(Topology::uniform(2, 1000.0, 1, 0.8)).unwrap();
        let mut rng = rng_for(1, 0, 0);
        c.step(&SchedulingAction::noop(), &[], &NoiseSpec::default(), &mut rng);
        let s = c.observe_state();
        assert!(s.queue_len.iter().all(|&q| q == 0.0));
        assert!(s.load.iter().all(|&l| l == 0.0));
        assert!((0..2).all(|j| s.node_util(j, 0) == 0.0));
    }

    #[test]
    fn single_request_on_idle_instance_takes_component_sum() {
        let mut c = Cluster::new(one_service(100.0, 1.0)).unwrap();
        c.set_record_mode(RecordMode::Latencies);
        let mut rng = rng_for(1, 0, 0);
        c.step(&SchedulingAction::noop(), &[req(0, 5.0)], &NoiseSpec::default(), &mut rng);
        assert_eq!(c.latencies(), &[85.0]);
    }

    #[test]
    fn warm_cache_lowers_latency() {
        let mut c = Cluster::new(one_service(100.0, 1.0)).unwrap();
        c.set_record_mode(RecordMode::Latencies);
        c.set_hit_rates(&[0.8]);
        let mut rng = rng_for(1, 0, 0);
        c.step(&SchedulingAction::noop(), &[req(0, 5.0)], &NoiseSpec::default(), &mut rng);
        assert!((c.latencies()[0] - 65.0).abs() < 1e-9);
    }

    #[test]
    fn overload_grows_queue_monotonically() {
        let mut c = Cluster::new(one_service(100.0, 0.5)).unwrap();
        let mut rng = rng_for(1, 0, 0);
        let mut last = 0.0;
        for t in 0..20 {
            let arrivals: Vec<_> = (0..20).map(|_| req(t, 5.0)).collect();
            c.step(&SchedulingAction::noop(), &arrivals, &NoiseSpec::default(), &mut rng);
            let q = c.observe_state().queue_len[0];
            assert!(q > last, "tick {t}: {q} <= {last}");
            last = q;
        }
        let t = c.totals();
        assert_eq!(t.generated, t.completed + c.queued());
    }

    #[test]
    fn history_is_windowed_mean_and_variance() {
        let mut topo = one_service(1000.0, 1.0);
        topo.sim.history_window = 3;
        let mut c = Cluster::new(topo).unwrap();
        let mut rng = rng_for(1, 0, 0);
        for (t, &n) in [1usize, 2, 3, 10].iter().enumerate() {
            let a: Vec<_> = (0..n).map(|_| req(t as Tick, 1.0)).collect();
            c.step(&SchedulingAction::noop(), &a, &NoiseSpec::default(), &mut rng);
        }
        let s = c.observe_state();
        assert!((s.history[0] - 5.0).abs() < 1e-12);
        assert!((s.history[1] - 38.0 / 3.0).abs() < 1e-12);
        assert_eq!(s, c.observe_state());
    }

    #[test]
    fn quotas_are_hard_without_burst() {
        let mut c = Cluster::new(one_service(100.0, 0.3)).unwrap();
        let mut rng = rng_for(1, 0, 0);
        let a: Vec<_> = (0..100).map(|_| req(0, 1.0)).collect();
        let out = c.step(&SchedulingAction::noop(), &a, &NoiseSpec::default(), &mut rng);
        assert_eq!(out.completed, 30);
    }

    #[test]
    fn priority_decides_burst_share() {
        let mut topo = one_service(100.0, 0.2);
        topo.services.push(topo.services[0].clone());
        topo.placement.push(InstanceSpec { service: 1, node: 0, quota: 0.2, priority: 0.5 });
        topo.placement[0].priority = 1.0;
        topo.placement[1].priority = 0.0;
        topo.sim.burst_ratio = 10.0;
        let mut c = Cluster::new(topo).unwrap();
        let mut rng = rng_for(1, 0, 0);
        let mut a = Vec::new();
        for s in 0..2 {
            a.extend((0..100).map(|_| Request { arrival_tick: 0, service_id: s, work_units: 1.0, payload_bytes: 1 }));
        }
        c.step(&SchedulingAction::noop(), &a, &NoiseSpec::default(), &mut rng);
        let st = c.observe_state();
        assert!(st.throughput(0) > st.throughput(1));
        assert!(st.throughput(0) + st.throughput(1) >= 99.0);
        assert!(st.throughput(1) < 25.0);
    }

    #[test]
    fn scale_out_respects_node_quota() {
        let mut c = Cluster::new(Topology::uniform(2, 1000.0, 1, 0.8)).unwrap();
        let mut rng = rng_for(1, 0, 0);
        let mut a = SchedulingAction::noop();
        a.instance_delta = vec![3; 8];
        let out = c.step(&a, &[], &NoiseSpec::default(), &mut rng);
        assert!(out.changes.created > 0);
        assert!(c.node_quota().iter().all(|&q| q <= 1.0 + 1e-9));
    }

    #[test]
    fn removal_keeps_one_instance_and_requeues_work() {
        let mut topo = one_service(10.0, 0.5);
        topo.placement.push(topo.placement[0].clone());
        let mut c = Cluster::new(topo).unwrap();
        let mut rng = rng_for(1, 0, 0);
        let a: Vec<_> = (0..40).map(|_| req(0, 1.0)).collect();
        c.step(&SchedulingAction::noop(), &a, &NoiseSpec::default(), &mut rng);
        let before = c.queued();
        let mut act = SchedulingAction::noop();
        act.instance_delta = vec![-5];
        let out = c.step(&act, &[], &NoiseSpec::default(), &mut rng);
        assert_eq!(out.changes.removed, 1);
        assert!(out.changes.sanitized > 0);
        assert_eq!(c.instance_count(0), 1);
        let t = c.totals();
        assert_eq!(t.generated, t.completed + c.queued());
        assert!(c.queued() < before);
    }

    #[test]
    fn malformed_action_is_sanitized_not_fatal() {
        let mut c = Cluster::new(Topology::uniform(2, 1000.0, 1, 0.8)).unwrap();
        let mut rng = rng_for(1, 0, 0);
        let a = SchedulingAction {
            instance_delta: vec![1, 2],
            migration: vec![true; 3],
            priority: Some(vec![5.0; 8]),
            quota: Some(vec![f64::NAN; 8]),
            target_placement: None,
        };
        let out = c.step(&a, &[], &NoiseSpec::default(), &mut rng);
        assert!(out.changes.sanitized >= 3);
        assert!(c.service_priority().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn plan_is_realized_exactly() {
        let mut c = Cluster::new(Topology::uniform(2, 1000.0, 1, 0.8)).unwrap();
        let mut plan = c.placement_plan();
        plan.counts = vec![1, 1, 2, 0, 0, 1, 1, 0, 1, 0, 0, 1, 1, 0, 0, 1];
        plan.quota = vec![0.05; 8];
        let mut rng = rng_for(1, 0, 0);
        let a = SchedulingAction { target_placement: Some(plan.clone()), ..Default::default() };
        c.step(&a, &[], &NoiseSpec::default(), &mut rng);
        assert_eq!(c.placement_plan().counts, plan.counts);
    }

    #[test]
    fn steady_load_converges() {
        let mut topo = one_service(1000.0, 1.0);
        topo.sim.util_smoothing = 0.5;
        let mut c = Cluster::new(topo).unwrap();
        let mut rng = rng_for(1, 0, 0);
        let mut prev = c.observe_state();
        for t in 0..200 {
            let a: Vec<_> = (0..10).map(|_| req(t, 20.0)).collect();
            c.step(&SchedulingAction::noop(), &a, &NoiseSpec::default(), &mut rng);
            let s = c.observe_state();
            if t == 199 {
                let d: f64 = s.utilization.iter().zip(&prev.utilization).map(|(a, b)| (a - b).abs()).sum();
                assert!(d < 1e-9);
                assert!((s.node_util(0, 0) - 0.2).abs() < 1e-9);
            }
            prev = s;
        }
    }

    #[test]
    fn fork_is_independent() {
        let mut c = Cluster::new(Topology::uniform(2, 1000.0, 1, 0.8)).unwrap();
        let mut rng = rng_for(1, 0, 0);
        let a: Vec<_> = (0..50).map(|i| Request { arrival_tick: 0, service_id: i % 8, work_units: 3.0, payload_bytes: 10 }).collect();
        c.step(&SchedulingAction::noop(), &a, &NoiseSpec::default(), &mut rng);
        let snapshot = c.observe_state();
        let mut f = c.fork();
        f.step(&SchedulingAction::noop(), &a, &NoiseSpec::default(), &mut rng);
        assert_eq!(c.observe_state(), snapshot);
        assert_eq!(f.totals().generated, 50);
    }
}
