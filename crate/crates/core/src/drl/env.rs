use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ActMode, ActionLayout, DrlError, PolicyAction, PolicyNet};
use crate::cluster::{
    encode_compact_state, reward, Cluster, NoiseSpec, PlacementPlan, RewardSpec, SchedulingAction, SystemState,
};
use crate::rng::{rng_for, stream, SimRng};
use crate::scalar::Scalar;
use crate::workload::{Tick, WorkloadGenerator};

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Episodic environment driven by [`PolicyAction`]s.
pub trait Env {
    fn state_dim(&self) -> usize;
    fn layout(&self) -> ActionLayout;
    /// Starts episode `episode`; the initial state is a pure function of it.
    fn reset(&mut self, episode: u64) -> Vec<f64>;
    fn step(&mut self, action: &PolicyAction) -> Result<EnvStep, DrlError>;
}

/// Two arms, context drawn uniformly from `[-1, 1]^2`. Arm 0 is optimal
/// when `x0 > x1`; the optimal arm pays 0 and the other -1.
#[derive(Debug, Clone)]
pub struct ContextualBandit {
    pub seed: u64,
    rng: SimRng,
    context: [f64; 2],
}

impl ContextualBandit {
    pub fn new(seed: u64) -> Self {
        let mut b = Self { seed, rng: rng_for(seed, stream::EVAL, 0), context: [0.0; 2] };
        b.reset(0);
        b
    }

    pub fn optimal_arm(context: &[f64]) -> usize {
        if context[0] > context[1] {
            0
        } else {
            1
        }
    }

    fn draw(&mut self) {
        self.context = [self.rng.random_range(-1.0..1.0), self.rng.random_range(-1.0..1.0)];
    }

    /// Share of `n` fresh contexts on which the greedy policy picks the
    /// optimal arm.
    pub fn greedy_optimal_rate<T: Scalar>(policy: &PolicyNet<T>, n: usize, seed: u64) -> Result<f64, DrlError> {
        let mut rng = rng_for(seed, stream::EVAL, u64::MAX);
        let mut hits = 0;
        for _ in 0..n {
            let c = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let s = [T::lit(c[0]), T::lit(c[1])];
            let (a, _) = policy.act(&s, ActMode::Greedy, &mut rng)?;
            if a.choices[0] == Self::optimal_arm(&c) {
                hits += 1;
            }
        }
        Ok(hits as f64 / n as f64)
    }
}

impl Env for ContextualBandit {
    fn state_dim(&self) -> usize {
        2
    }

    fn layout(&self) -> ActionLayout {
        ActionLayout { categorical: vec![2], gaussian: 0 }
    }

    fn reset(&mut self, episode: u64) -> Vec<f64> {
        self.rng = rng_for(self.seed, stream::EVAL, episode);
        self.draw();
        self.context.to_vec()
    }

    fn step(&mut self, action: &PolicyAction) -> Result<EnvStep, DrlError> {
        let arm = *action.choices.first().ok_or_else(|| DrlError::Invalid("bandit needs one choice".into()))?;
        let reward = if arm == Self::optimal_arm(&self.context) { 0.0 } else { -1.0 };
        self.draw();
        // Every pull is its own one-step episode.
        Ok(EnvStep { next_state: self.context.to_vec(), reward, done: true })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StateEncoding {
    /// Every field of the system state, scaled and squashed.
    Full { load_scale: f64, latency_scale: f64 },
    /// Mean CPU, memory, network utilization and queue level.
    Compact { queue_reference: f64 },
}

impl StateEncoding {
    pub fn dim(&self, services: usize, nodes: usize) -> usize {
        match self {
            Self::Full { .. } => SystemState::zeros(services, nodes).dim(),
            Self::Compact { .. } => 4,
        }
    }
}

/// Encodes `state`; fails when the result does not have `dim` entries.
pub fn encode_state(state: &SystemState, encoding: &StateEncoding, dim: usize) -> Result<Vec<f64>, DrlError> {
    let v = match encoding {
        StateEncoding::Full { load_scale, latency_scale } => state.normalized(*load_scale, *latency_scale),
        StateEncoding::Compact { queue_reference } => encode_compact_state(state, *queue_reference).to_array().to_vec(),
    };
    if v.len() != dim {
        return Err(DrlError::Dimension { expected: dim, found: v.len() });
    }
    Ok(v)
}

/// Candidate migrations: for nodes in decreasing CPU utilization, the
/// service with the most instances there, moved to the least utilized node.
pub fn migration_shortlist(node_cpu: &[f64], plan: &PlacementPlan, len: usize) -> Vec<(usize, usize)> {
    let n = node_cpu.len();
    if n < 2 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| node_cpu[b].total_cmp(&node_cpu[a]).then(a.cmp(&b)));
    let dst = order[n - 1];
    let mut out = Vec::with_capacity(len);
    for &src in &order[..n - 1] {
        if out.len() == len {
            break;
        }
        let best = (0..plan.services).filter(|&s| plan.count(s, src) > 0).max_by(|&a, &b| {
            plan.count(a, src).cmp(&plan.count(b, src)).then(b.cmp(&a))
        });
        if let Some(s) = best {
            if !out.contains(&(s, dst)) {
                out.push((s, dst));
            }
        }
    }
    out
}

/// Layout used by scheduling policies: a {-1, 0, +1} instance head per
/// service, a migration head (no-op plus `shortlist` pairs), then priority
/// and quota per service.
pub fn scheduling_layout(services: usize, shortlist: usize) -> ActionLayout {
    let mut categorical = vec![3; services];
    categorical.push(shortlist + 1);
    ActionLayout { categorical, gaussian: 2 * services }
}

/// Translates a policy action into a cluster action. Squashed Gaussian
/// outputs shift the current priority and quota by up to `adjust_step`
/// (0.5 means no change).
pub fn decode_action(
    action: &PolicyAction,
    node_cpu: &[f64],
    plan: &PlacementPlan,
    shortlist: usize,
    adjust_step: f64,
) -> SchedulingAction {
    let k = plan.services;
    let n = plan.nodes;
    let instance_delta = action.choices[..k].iter().map(|&c| c as i32 - 1).collect();
    let mut migration = vec![false; k * n];
    let pick = action.choices[k];
    if pick > 0 {
        if let Some(&(s, dst)) = migration_shortlist(node_cpu, plan, shortlist).get(pick - 1) {
            migration[s * n + dst] = true;
        }
    }
    let sq = action.squashed();
    let shift = |cur: &[f64], u: &[f64]| -> Vec<f64> {
        cur.iter().zip(u).map(|(&c, &v)| (c + (2.0 * v - 1.0) * adjust_step).clamp(0.0, 1.0)).collect()
    };
    SchedulingAction {
        instance_delta,
        migration,
        priority: Some(shift(&plan.priority, &sq[..k])),
        quota: Some(shift(&plan.quota, &sq[k..2 * k])),
        target_placement: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEnvConfig {
    pub episode_len: usize,
    pub encoding: StateEncoding,
    pub reward: RewardSpec,
    pub shortlist: usize,
    /// Largest priority or quota change per step.
    pub adjust_step: f64,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Default for ClusterEnvConfig {
    fn default() -> Self {
        Self {
            episode_len: 64,
            encoding: StateEncoding::Full { load_scale: 100.0, latency_scale: 100.0 },
            reward: RewardSpec::default(),
            shortlist: 4,
            adjust_step: 0.1,
            noise: NoiseSpec { util_std: 0.01 },
            seed: 0,
        }
    }
}

/// Simulated cluster under a workload scenario. Episode `e` starts from
/// the template cluster at a scenario tick determined by `e`.
pub struct ClusterEnv {
    pub config: ClusterEnvConfig,
    template: Cluster,
    generator: WorkloadGenerator,
    cluster: Cluster,
    tick: Tick,
    steps: usize,
    rng: SimRng,
    dim: usize,
}

impl ClusterEnv {
    pub fn new(template: Cluster, generator: WorkloadGenerator, config: ClusterEnvConfig) -> Result<Self, DrlError> {
        if generator.scenario().service_count() != template.service_count() {
            return Err(DrlError::Invalid("scenario and topology disagree on the service count".into()));
        }
        if config.episode_len == 0 || generator.scenario().horizon <= config.episode_len as Tick {
            return Err(DrlError::Invalid("episode_len must be in [1, horizon)".into()));
        }
        let dim = config.encoding.dim(template.service_count(), template.node_count());
        Ok(Self {
            cluster: template.fork(),
            rng: rng_for(config.seed, stream::JITTER, 0),
            template,
            generator,
            tick: 0,
            steps: 0,
            dim,
            config,
        })
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    fn node_cpu(&self) -> Vec<f64> {
        let st = self.cluster.observe_state();
        (0..st.nodes()).map(|j| st.node_util(j, 0)).collect()
    }

    pub fn encode(&self) -> Result<Vec<f64>, DrlError> {
        encode_state(&self.cluster.observe_state(), &self.config.encoding, self.dim)
    }
}

impl Env for ClusterEnv {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn layout(&self) -> ActionLayout {
        scheduling_layout(self.cluster.service_count(), self.config.shortlist)
    }

    fn reset(&mut self, episode: u64) -> Vec<f64> {
        self.cluster = self.template.fork();
        let span = self.generator.scenario().horizon - self.config.episode_len as Tick;
        self.tick = (episode * self.config.episode_len as Tick) % span;
        self.steps = 0;
        self.rng = rng_for(self.config.seed, stream::JITTER, episode);
        self.encode().expect("encoding width fixed at construction")
    }

    fn step(&mut self, action: &PolicyAction) -> Result<EnvStep, DrlError> {
        let act = decode_action(action, &self.node_cpu(), &self.cluster.placement_plan(), self.config.shortlist, self.config.adjust_step);
        let arrivals = self.generator.generate_tick(self.tick).map_err(|e| DrlError::Invalid(e.to_string()))?;
        let out = self.cluster.step(&act, &arrivals, &self.config.noise, &mut self.rng);
        let r = reward(self.cluster.state(), &out.changes, &self.config.reward);
        self.tick += 1;
        self.steps += 1;
        Ok(EnvStep { next_state: self.encode()?, reward: r, done: self.steps >= self.config.episode_len })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::Topology;
    use crate::workload::WorkloadScenario;

    #[test]
    fn idle_compact_state_is_zero() {
        let st = SystemState::zeros(3, 2);
        let v = encode_state(&st, &StateEncoding::Compact { queue_reference: 100.0 }, 4).unwrap();
        assert_eq!(v, vec![0.0; 4]);
        assert!(encode_state(&st, &StateEncoding::Compact { queue_reference: 100.0 }, 5).is_err());
    }

    #[test]
    fn full_dimension_bookkeeping() {
        let (k, n) = (3, 2);
        let enc = StateEncoding::Full { load_scale: 10.0, latency_scale: 100.0 };
        assert_eq!(enc.dim(k, n), k + 3 * n + k + 2 * k + 2 * k);
    }

    #[test]
    fn shortlist_moves_from_hot_to_cold() {
        let plan = PlacementPlan {
            services: 2,
            nodes: 3,
            counts: vec![2, 0, 1, 1, 3, 0],
            quota: vec![0.1; 2],
            priority: vec![0.5; 2],
        };
        let s = migration_shortlist(&[0.5, 0.9, 0.1], &plan, 4);
        assert_eq!(s, vec![(1, 2), (0, 2)]);
    }

    #[test]
    fn cluster_env_runs_an_episode() {
        let topo = Topology::uniform(2, 1000.0, 1, 0.8);
        let cluster = Cluster::new(topo).unwrap();
        let gen = WorkloadGenerator::new(WorkloadScenario::flat(20.0, 200, 3)).unwrap();
        let mut env = ClusterEnv::new(cluster, gen, ClusterEnvConfig { episode_len: 5, ..Default::default() }).unwrap();
        let s = env.reset(0);
        assert_eq!(s.len(), env.state_dim());
        let lay = env.layout();
        let a = PolicyAction { choices: vec![1; lay.categorical.len()], raw: vec![0.0; lay.gaussian] };
        let mut done = false;
        let mut steps = 0;
        while !done {
            let st = env.step(&a).unwrap();
            assert!(st.reward <= 0.0);
            done = st.done;
            steps += 1;
        }
        assert_eq!(steps, 5);
    }
}
