use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Chromosome;
use crate::cluster::{Cluster, NoiseSpec, SchedulingAction, SystemState};
use crate::rng::{rng_for, stream};
use crate::workload::{Request, Tick, WorkloadGenerator};

/// Weights and normalizers of the scalar fitness (lower is better).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub t_max: f64,
    pub u_max: f64,
    pub l_max: f64,
}

impl Default for FitnessWeights {
    fn default() -> Self {
        Self { w1: 0.4, w2: 0.35, w3: 0.25, t_max: 500.0, u_max: 1.0, l_max: 1.0 }
    }
}

impl FitnessWeights {
    pub fn is_valid(&self) -> bool {
        self.w1 >= 0.0 && self.w2 >= 0.0 && self.w3 >= 0.0 && self.t_max > 0.0 && self.u_max > 0.0 && self.l_max > 0.0
    }
}

/// Rollout summary: mean response time (ms), utilization of allocated CPU,
/// and load-balance degree.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub response_ms: f64,
    pub utilization: f64,
    pub balance: f64,
}

impl Objectives {
    /// Minimization triple `(T, -U, -L)`.
    pub fn as_min_triple(&self) -> [f64; 3] {
        [self.response_ms, -self.utilization, -self.balance]
    }
}

/// `w1·T/T_max + w2·(1 − U/U_max) + w3·(1 − L/L_max)`; non-finite inputs
/// give `+∞`.
pub fn fitness(o: &Objectives, w: &FitnessWeights) -> f64 {
    let f = w.w1 * o.response_ms / w.t_max + w.w2 * (1.0 - o.utilization / w.u_max) + w.w3 * (1.0 - o.balance / w.l_max);
    if f.is_finite() {
        f
    } else {
        f64::INFINITY
    }
}

/// `1 − std/mean` of the per-node loads, clamped to `[0, l_max]`.
pub fn balance_degree(node_loads: &[f64], l_max: f64) -> f64 {
    let n = node_loads.len() as f64;
    if node_loads.is_empty() {
        return l_max;
    }
    let mean = node_loads.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return l_max.min(1.0);
    }
    let std = (node_loads.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    (1.0 - std / mean).clamp(0.0, l_max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    pub objectives: Objectives,
    /// Observed state at the end of the rollout, when one was simulated.
    pub state: Option<SystemState>,
}

/// Scores chromosomes. Implementations must be pure functions of the
/// chromosome for the duration of a run.
pub trait Evaluator {
    fn evaluate(&mut self, x: &Chromosome) -> Evaluation;
    fn weights(&self) -> FitnessWeights;
    /// Distinct evaluations performed so far.
    fn evaluations(&self) -> usize;
}

/// Wraps a closure returning objectives.
pub struct FnEvaluator<F> {
    f: F,
    weights: FitnessWeights,
    count: usize,
}

impl<F: FnMut(&Chromosome) -> Objectives> FnEvaluator<F> {
    pub fn new(weights: FitnessWeights, f: F) -> Self {
        Self { f, weights, count: 0 }
    }
}

impl<F: FnMut(&Chromosome) -> Objectives> Evaluator for FnEvaluator<F> {
    fn evaluate(&mut self, x: &Chromosome) -> Evaluation {
        self.count += 1;
        let objectives = (self.f)(x);
        Evaluation { fitness: fitness(&objectives, &self.weights), objectives, state: None }
    }

    fn weights(&self) -> FitnessWeights {
        self.weights
    }

    fn evaluations(&self) -> usize {
        self.count
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub ticks: usize,
    pub start_tick: Tick,
    pub seed: u64,
    pub noise: NoiseSpec,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { ticks: 120, start_tick: 0, seed: 0, noise: NoiseSpec::default() }
    }
}

/// Short what-if rollout on a fork of the live cluster with a fixed arrival
/// sequence and a fixed jitter seed. Results are memoized per chromosome.
pub struct SimEvaluator {
    template: Cluster,
    arrivals: Vec<Vec<Request>>,
    config: EvalConfig,
    weights: FitnessWeights,
    cache: HashMap<Vec<u64>, Evaluation>,
}

impl SimEvaluator {
    pub fn new(
        template: &Cluster,
        generator: &WorkloadGenerator,
        config: EvalConfig,
        weights: FitnessWeights,
    ) -> Result<Self, super::HybridError> {
        let horizon = generator.scenario().horizon;
        let arrivals = (0..config.ticks as Tick)
            .map(|t| generator.generate_tick((config.start_tick + t) % horizon))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| super::HybridError::Config(e.to_string()))?;
        Ok(Self { template: template.fork(), arrivals, config, weights, cache: HashMap::new() })
    }

    pub fn template(&self) -> &Cluster {
        &self.template
    }

    /// Runs the rollout without consulting the cache.
    pub fn rollout(&self, x: &Chromosome) -> Evaluation {
        let mut c = self.template.fork();
        let mut rng = rng_for(self.config.seed, stream::EVAL, 0);
        let apply = SchedulingAction { target_placement: Some(x.to_plan()), ..SchedulingAction::noop() };
        let noop = SchedulingAction::noop();
        let n = c.node_count();
        let (mut done, mut lat, mut used, mut alloc) = (0u64, 0.0, 0.0, 0.0);
        let mut node_load = vec![0.0; n];
        for (t, arr) in self.arrivals.iter().enumerate() {
            let out = c.step(if t == 0 { &apply } else { &noop }, arr, &self.config.noise, &mut rng);
            done += out.completed;
            lat += out.latency_sum_ms;
            used += out.cpu_used;
            alloc += out.cpu_guaranteed;
            let st = c.true_state();
            for (j, l) in node_load.iter_mut().enumerate() {
                *l += st.node_util(j, 0);
            }
        }
        let queued = c.queued();
        let waiting = done + queued;
        let response_ms = if waiting == 0 { 0.0 } else { (lat + c.queued_age_ms()) / waiting as f64 };
        let utilization = if alloc > 0.0 { (used / alloc).min(1.0) } else { 0.0 };
        let objectives = Objectives { response_ms, utilization, balance: balance_degree(&node_load, self.weights.l_max) };
        Evaluation { fitness: fitness(&objectives, &self.weights), objectives, state: Some(c.observe_state()) }
    }
}

impl Evaluator for SimEvaluator {
    fn evaluate(&mut self, x: &Chromosome) -> Evaluation {
        let key = x.key();
        if let Some(e) = self.cache.get(&key) {
            return e.clone();
        }
        let e = self.rollout(x);
        self.cache.insert(key, e.clone());
        e
    }

    fn weights(&self) -> FitnessWeights {
        self.weights
    }

    fn evaluations(&self) -> usize {
        self.cache.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_sum_examples() {
        let w = FitnessWeights { t_max: 200.0, u_max: 1.0, l_max: 1.0, ..Default::default() };
        let at = |t, u, l| fitness(&Objectives { response_ms: t, utilization: u, balance: l }, &w);
        assert!((at(200.0, 1.0, 1.0) - 0.4).abs() < 1e-12);
        assert!((at(0.0, 0.0, 0.0) - 0.6).abs() < 1e-12);
        assert!((at(100.0, 0.5, 0.5) - 0.5).abs() < 1e-12);
        assert_eq!(at(f64::NAN, 0.5, 0.5), f64::INFINITY);
    }

    #[test]
    fn balance_of_equal_and_skewed_loads() {
        assert_eq!(balance_degree(&[0.5, 0.5, 0.5], 1.0), 1.0);
        assert!((balance_degree(&[1.0, 0.0], 1.0) - 0.0).abs() < 1e-12);
        assert!((balance_degree(&[0.75, 0.25], 1.0) - 0.5).abs() < 1e-12);
    }
}
