use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::cluster::{Cluster, NoiseSpec, SchedulingAction};
use crate::drl::{decode_action, encode_state, scheduling_layout, ActMode, PolicyConfig, PolicyNet, StateEncoding};
use crate::hybrid::{
    hybrid_scheduling, Chromosome, EvalConfig, FitnessWeights, HybridConfig, RefineConfig, Refiner, SimEvaluator,
};
use crate::lstm::Forecast;
use crate::rng::{derive_seed, rng_for, stream, SimRng};
use crate::scalar::Scalar;
use crate::workload::{ServiceMix, Tick, WorkloadGenerator, WorkloadScenario};

/// What a scheduler sees at a decision point.
pub struct DecisionContext<'a> {
    pub tick: Tick,
    pub cluster: &'a Cluster,
    /// Mean arrivals per tick for each service over the last interval.
    pub recent_load: &'a [f64],
    pub mix: &'a [ServiceMix],
    /// Latest forecast when a predictor is attached.
    pub forecast: Option<&'a Forecast>,
}

pub trait Scheduler {
    fn name(&self) -> &'static str;
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<SchedulingAction, ExperimentError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    Hybrid,
    Drl,
    RoundRobin,
    Random,
    ThresholdAutoscaler,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 5] =
        [Self::Hybrid, Self::Drl, Self::RoundRobin, Self::Random, Self::ThresholdAutoscaler];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hybrid => "hybrid",
            Self::Drl => "drl",
            Self::RoundRobin => "round-robin",
            Self::Random => "random",
            Self::ThresholdAutoscaler => "threshold-autoscaler",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchedulerKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ExperimentError::Config(format!("unknown scheduler kind '{s}'")))
    }
}

/// Keeps the initial round-robin placement untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct StaticRoundRobin;

impl Scheduler for StaticRoundRobin {
    fn name(&self) -> &'static str {
        "round-robin"
    }

    fn decide(&mut self, _ctx: &DecisionContext<'_>) -> Result<SchedulingAction, ExperimentError> {
        Ok(SchedulingAction::noop())
    }
}

/// One random ±1 instance change and, with probability `migrate_prob`, one
/// random migration per decision.
pub struct RandomScheduler {
    rng: SimRng,
    pub migrate_prob: f64,
}

impl RandomScheduler {
    pub fn new(seed: u64, migrate_prob: f64) -> Self {
        Self { rng: rng_for(seed, stream::SCHEDULER, 0), migrate_prob }
    }
}

impl Scheduler for RandomScheduler {
    fn name(&self) -> &'static str {
        "random"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<SchedulingAction, ExperimentError> {
        let k = ctx.cluster.service_count();
        let n = ctx.cluster.node_count();
        let mut a = SchedulingAction::noop();
        let s = self.rng.random_range(0..k);
        let d = self.rng.random_range(-1..=1);
        if d != 0 {
            a.instance_delta = vec![0; k];
            a.instance_delta[s] = d;
        }
        if n > 1 && self.rng.random_bool(self.migrate_prob.clamp(0.0, 1.0)) {
            a.migration = vec![false; k * n];
            a.migration[self.rng.random_range(0..k) * n + self.rng.random_range(0..n)] = true;
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub scale_up: f64,
    pub scale_down: f64,
    /// Ticks after a change during which a service is left alone.
    pub cooldown: Tick,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self { scale_up: 0.8, scale_down: 0.3, cooldown: 30 }
    }
}

/// Reactive autoscaler: +1 instance above `scale_up`, −1 below
/// `scale_down`, per service, with a per-service cooldown.
#[derive(Debug, Clone)]
pub struct ThresholdAutoscaler {
    pub config: ThresholdConfig,
    last_change: Vec<Option<Tick>>,
}

impl ThresholdAutoscaler {
    pub fn new(config: ThresholdConfig) -> Self {
        Self { config, last_change: Vec::new() }
    }

    /// Decision from per-service utilizations and instance counts.
    pub fn decide_from(&mut self, tick: Tick, utils: &[f64], counts: &[usize]) -> SchedulingAction {
        let k = utils.len();
        self.last_change.resize(k, None);
        let mut delta = vec![0i32; k];
        for s in 0..k {
            if self.last_change[s].is_some_and(|t0| tick < t0 + self.config.cooldown) {
                continue;
            }
            if utils[s] > self.config.scale_up {
                delta[s] = 1;
            } else if utils[s] < self.config.scale_down && counts.get(s).is_some_and(|&c| c > 1) {
                delta[s] = -1;
            }
            if delta[s] != 0 {
                self.last_change[s] = Some(tick);
            }
        }
        if delta.iter().all(|&d| d == 0) {
            SchedulingAction::noop()
        } else {
            SchedulingAction { instance_delta: delta, ..SchedulingAction::noop() }
        }
    }
}

impl Scheduler for ThresholdAutoscaler {
    fn name(&self) -> &'static str {
        "threshold-autoscaler"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<SchedulingAction, ExperimentError> {
        let k = ctx.cluster.service_count();
        let utils: Vec<f64> = (0..k).map(|s| ctx.cluster.service_utilization(s)).collect();
        let counts: Vec<usize> = (0..k).map(|s| ctx.cluster.instance_count(s)).collect();
        Ok(self.decide_from(ctx.tick, &utils, &counts))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridSchedulerConfig {
    pub ga: HybridConfig,
    /// Length of each what-if rollout.
    pub eval_ticks: usize,
    pub weights: FitnessWeights,
    /// Replan when the planning load moved by more than this fraction
    /// since the last plan.
    pub replan_threshold: f64,
    /// Replan at least this often.
    pub max_replan_interval: Tick,
    /// Refine the elite with a policy trained online.
    pub refine: Option<RefineConfig>,
}

impl Default for HybridSchedulerConfig {
    fn default() -> Self {
        Self {
            ga: HybridConfig {
                population: 16,
                population_min: 8,
                population_max: 24,
                elite: 4,
                max_iter: 8,
                local_search_budget: 8,
                convergence_window: 4,
                ..HybridConfig::default()
            },
            eval_ticks: 20,
            weights: FitnessWeights::default(),
            replan_threshold: 0.1,
            max_replan_interval: 120,
            refine: Some(RefineConfig::default()),
        }
    }
}

/// Periodic genetic search over placements, evaluated by short rollouts on
/// a fork of the live cluster under the recently observed load (scaled up
/// by the forecast when one is available).
pub struct HybridScheduler<T> {
    pub config: HybridSchedulerConfig,
    seed: u64,
    refiner: Option<Refiner<T>>,
    planned_load: Option<f64>,
    planned_at: Tick,
    plans: u64,
}

impl<T: Scalar> HybridScheduler<T> {
    pub fn new(config: HybridSchedulerConfig, services: usize, nodes: usize, seed: u64) -> Result<Self, ExperimentError> {
        config.ga.validate()?;
        if config.eval_ticks == 0 {
            return Err(ExperimentError::Config("hybrid.eval_ticks must be > 0".into()));
        }
        let refiner = config.refine.as_ref().map(|rc| {
            let mut rc = rc.clone();
            rc.seed = derive_seed(seed, stream::POLICY, 0);
            let pc = PolicyConfig::new(rc.encoding.dim(services, nodes), scheduling_layout(services, rc.shortlist));
            let mut net = PolicyNet::new(pc);
            net.init(&mut rng_for(seed, stream::POLICY, 1));
            Refiner::new(net, rc)
        });
        Ok(Self { config, seed, refiner, planned_load: None, planned_at: 0, plans: 0 })
    }

    pub fn plans(&self) -> u64 {
        self.plans
    }
}

impl<T: Scalar> Scheduler for HybridScheduler<T> {
    fn name(&self) -> &'static str {
        "hybrid"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<SchedulingAction, ExperimentError> {
        let observed: f64 = ctx.recent_load.iter().sum();
        if !(observed > 0.0) {
            return Ok(SchedulingAction::noop());
        }
        let factor = ctx.forecast.map_or(1.0, |f| if f.baseline > 0.0 { (f.predicted / f.baseline).max(1.0) } else { 1.0 });
        let load = observed * factor;
        let due = match self.planned_load {
            None => true,
            Some(prev) => {
                (load / prev - 1.0).abs() > self.config.replan_threshold
                    || ctx.tick >= self.planned_at + self.config.max_replan_interval
            }
        };
        if !due {
            return Ok(SchedulingAction::noop());
        }
        self.planned_load = Some(load);
        self.planned_at = ctx.tick;
        self.plans += 1;

        let mut scenario = WorkloadScenario::flat(load, self.config.eval_ticks as Tick, derive_seed(self.seed, stream::EVAL, self.plans));
        scenario.name = "hybrid-rollout".into();
        scenario.service_mix = ctx
            .mix
            .iter()
            .zip(ctx.recent_load)
            .map(|(m, &l)| ServiceMix { weight: l, ..m.clone() })
            .collect();
        let generator = WorkloadGenerator::new(scenario)?;
        let eval_cfg = EvalConfig {
            ticks: self.config.eval_ticks,
            start_tick: 0,
            seed: derive_seed(self.seed, stream::JITTER, self.plans),
            noise: NoiseSpec::default(),
        };
        let mut eval = SimEvaluator::new(ctx.cluster, &generator, eval_cfg, self.config.weights)?;
        let initial = Chromosome::from_plan(&ctx.cluster.placement_plan());
        let mut ga = self.config.ga.clone();
        ga.seed = derive_seed(self.seed, stream::GA, self.plans);
        let result = hybrid_scheduling(&initial, &ga, &mut eval, self.refiner.as_mut())?;
        if result.best == initial {
            return Ok(SchedulingAction::noop());
        }
        Ok(SchedulingAction { target_placement: Some(result.best.to_plan()), ..SchedulingAction::noop() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrlSchedulerConfig {
    pub encoding: StateEncoding,
    pub shortlist: usize,
    pub adjust_step: f64,
    /// Most likely action instead of a sampled one.
    pub greedy: bool,
}

impl Default for DrlSchedulerConfig {
    fn default() -> Self {
        Self {
            encoding: StateEncoding::Full { load_scale: 100.0, latency_scale: 100.0 },
            shortlist: 4,
            adjust_step: 0.1,
            greedy: true,
        }
    }
}

/// Learned policy acting on the encoded observation.
pub struct DrlScheduler<T> {
    pub policy: PolicyNet<T>,
    pub config: DrlSchedulerConfig,
    rng: SimRng,
}

impl<T: Scalar> DrlScheduler<T> {
    pub fn new(policy: PolicyNet<T>, config: DrlSchedulerConfig, services: usize, nodes: usize, seed: u64) -> Result<Self, ExperimentError> {
        let dim = config.encoding.dim(services, nodes);
        if policy.config.state_dim != dim || *policy.layout() != scheduling_layout(services, config.shortlist) {
            return Err(ExperimentError::Config("policy shape does not match the topology and encoding".into()));
        }
        Ok(Self { policy, config, rng: rng_for(seed, stream::POLICY, 0) })
    }

    /// Freshly initialized policy for the given shape.
    pub fn untrained(config: DrlSchedulerConfig, services: usize, nodes: usize, seed: u64) -> Result<Self, ExperimentError> {
        let pc = PolicyConfig::new(config.encoding.dim(services, nodes), scheduling_layout(services, config.shortlist));
        let mut net = PolicyNet::new(pc);
        net.init(&mut rng_for(seed, stream::POLICY, 1));
        Self::new(net, config, services, nodes, seed)
    }
}

impl<T: Scalar> Scheduler for DrlScheduler<T> {
    fn name(&self) -> &'static str {
        "drl"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<SchedulingAction, ExperimentError> {
        let st = ctx.cluster.observe_state();
        let x: Vec<T> = encode_state(&st, &self.config.encoding, self.policy.config.state_dim)?
            .into_iter()
            .map(T::lit)
            .collect();
        let mode = if self.config.greedy { ActMode::Greedy } else { ActMode::Sample };
        let (action, _) = self.policy.act(&x, mode, &mut self.rng)?;
        let node_cpu: Vec<f64> = (0..st.nodes()).map(|j| st.node_util(j, 0)).collect();
        Ok(decode_action(&action, &node_cpu, &ctx.cluster.placement_plan(), self.config.shortlist, self.config.adjust_step))
    }
}
