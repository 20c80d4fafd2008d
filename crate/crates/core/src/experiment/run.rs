use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    proactive_deltas, DecisionContext, DrlScheduler, DrlSchedulerConfig, ExperimentError, HybridScheduler,
    HybridSchedulerConfig, ProactiveConfig, RandomScheduler, Scheduler, SchedulerKind, StaticRoundRobin,
    ThresholdAutoscaler, ThresholdConfig,
};
use crate::cache::{CacheConfig, CacheDriver, ZipfWorkload};
use crate::cluster::{AppliedChanges, Cluster, NoiseSpec, RecordMode, SchedulingAction, Topology, TraceRow, RESOURCES};
use crate::drl::PolicyNet;
use crate::hybrid::{balance_degree, fitness, FitnessWeights, Objectives};
use crate::lstm::{Forecast, LoadPredictor};
use crate::metrics::{LatencyStats, RunSummary};
use crate::rng::{derive_seed, rng_for, stream};
use crate::scalar::Scalar;
use crate::workload::{MarketTick, Tick, WorkloadGenerator, WorkloadScenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheSettings {
    pub config: CacheConfig,
    pub workload: ZipfWorkload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub scheduler: SchedulerKind,
    pub decision_interval: Tick,
    pub seed: u64,
    pub noise: NoiseSpec,
    /// Extra arrival-free ticks after the horizon to let queues empty.
    pub drain_ticks: Tick,
    pub threshold: ThresholdConfig,
    pub hybrid: HybridSchedulerConfig,
    pub drl: DrlSchedulerConfig,
    pub random_migrate_prob: f64,
    pub proactive: ProactiveConfig,
    pub cache: Option<CacheSettings>,
    pub weights: FitnessWeights,
    pub record_trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scheduler: SchedulerKind::RoundRobin,
            decision_interval: 10,
            seed: 0,
            noise: NoiseSpec { util_std: 0.01 },
            drain_ticks: 600,
            threshold: ThresholdConfig::default(),
            hybrid: HybridSchedulerConfig::default(),
            drl: DrlSchedulerConfig::default(),
            random_migrate_prob: 0.5,
            proactive: ProactiveConfig::default(),
            cache: None,
            weights: FitnessWeights::default(),
            record_trace: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if self.decision_interval == 0 {
            return bad("decision_interval must be > 0");
        }
        if !(self.noise.util_std >= 0.0) {
            return bad("noise.util_std must be >= 0");
        }
        let t = &self.threshold;
        if !(0.0 <= t.scale_down && t.scale_down < t.scale_up) {
            return bad("threshold needs 0 <= scale_down < scale_up");
        }
        let p = &self.proactive;
        if p.check_every == 0 || !(p.target_util > 0.0 && p.target_util <= 1.0) || !(p.max_factor >= 1.0) {
            return bad("proactive needs check_every > 0, target_util in (0,1] and max_factor >= 1");
        }
        if !(0.0..=1.0).contains(&self.random_migrate_prob) {
            return bad("random_migrate_prob must be in [0,1]");
        }
        if !self.weights.is_valid() {
            return bad("fitness weights out of range");
        }
        if let Some(c) = &self.cache {
            c.config.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionSource {
    Scheduler,
    Proactive,
    Both,
}

/// A non-empty reconfiguration and what it changed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub tick: Tick,
    pub source: DecisionSource,
    pub created: u32,
    pub removed: u32,
    pub migrations: u32,
    pub quota_change: f64,
    pub sanitized: u32,
    pub instances: usize,
}

pub struct RunOutput {
    pub summary: RunSummary,
    pub trace: Vec<TraceRow>,
    pub decisions: Vec<DecisionRecord>,
    /// Forecasts issued during the run, by tick.
    pub forecasts: Vec<(Tick, Forecast)>,
}

pub fn write_decisions_csv<W: Write>(rows: &[DecisionRecord], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn build_scheduler<T: Scalar>(
    cfg: &RunConfig,
    k: usize,
    n: usize,
    policy: Option<PolicyNet<T>>,
) -> Result<Box<dyn Scheduler>, ExperimentError> {
    let seed = derive_seed(cfg.seed, stream::SCHEDULER, 0);
    Ok(match cfg.scheduler {
        SchedulerKind::RoundRobin => Box::new(StaticRoundRobin),
        SchedulerKind::Random => Box::new(RandomScheduler::new(seed, cfg.random_migrate_prob)),
        SchedulerKind::ThresholdAutoscaler => Box::new(ThresholdAutoscaler::new(cfg.threshold)),
        SchedulerKind::Hybrid => Box::new(HybridScheduler::<T>::new(cfg.hybrid.clone(), k, n, seed)?),
        SchedulerKind::Drl => match policy {
            Some(p) => Box::new(DrlScheduler::new(p, cfg.drl.clone(), k, n, seed)?),
            None => Box::new(DrlScheduler::<T>::untrained(cfg.drl.clone(), k, n, seed)?),
        },
    })
}

fn merge(base: SchedulingAction, extra: Option<Vec<i32>>, hold: bool, k: usize) -> SchedulingAction {
    let mut a = base;
    if a.target_placement.is_some() {
        return a;
    }
    if hold {
        a.instance_delta.iter_mut().for_each(|d| *d = (*d).max(0));
    }
    if let Some(extra) = extra {
        a.instance_delta.resize(k, 0);
        for (d, e) in a.instance_delta.iter_mut().zip(extra) {
            *d = (*d).max(e);
        }
    }
    a
}

/// Runs `scenario` on `topology` under the configured scheduler. With a
/// predictor, forecasts are issued every `proactive.check_every` ticks and
/// burst warnings pre-provision instances ahead of the decision interval.
pub fn run_experiment<T: Scalar>(
    topology: &Topology,
    scenario: &WorkloadScenario,
    cfg: &RunConfig,
    predictor: Option<&LoadPredictor<T>>,
    policy: Option<PolicyNet<T>>,
) -> Result<RunOutput, ExperimentError> {
    cfg.validate()?;
    let generator = WorkloadGenerator::new(scenario.clone())?;
    if scenario.service_count() != topology.service_count() {
        return Err(ExperimentError::Config(format!(
            "scenario has {} services but the topology has {}",
            scenario.service_count(),
            topology.service_count()
        )));
    }
    let mut cluster = Cluster::new(topology.clone())?;
    cluster.set_record_mode(if cfg.record_trace { RecordMode::Trace } else { RecordMode::Latencies });
    let (k, n) = (cluster.service_count(), cluster.node_count());
    let mut scheduler = build_scheduler(cfg, k, n, policy)?;
    let mut cache = match &cfg.cache {
        Some(c) => Some(CacheDriver::new(c.config.clone(), c.workload.clone(), derive_seed(cfg.seed, stream::CACHE, 0))?),
        None => None,
    };
    let threshold = cfg.proactive.burst_threshold.or(predictor.map(|p| p.config.burst_threshold));
    let mix = &scenario.service_mix;

    let mut rng = rng_for(cfg.seed, stream::JITTER, 0);
    let mut market: Vec<MarketTick> = Vec::new();
    let mut forecasts = Vec::new();
    let mut last_forecast: Option<Forecast> = None;
    let mut decisions = Vec::new();
    let mut window = vec![0.0; k];
    let mut recent = vec![0.0; k];
    let mut window_ticks = 0u64;
    let mut hold_until: Option<Tick> = None;
    let mut first_scale_up = None;
    let mut backlog = 0.0;
    let mut util_sum = [0.0; 3];
    let mut node_load = vec![0.0; n];
    let mut arrivals = Vec::new();

    for t in 0..scenario.horizon {
        if let Some(c) = cache.as_mut() {
            let hr = c.advance(scenario.tick_length)?;
            cluster.set_hit_rates(&vec![hr; k]);
        }

        let mut extra = None;
        if let (Some(p), Some(thr)) = (predictor, threshold) {
            if t as usize >= p.config.warm_up() && t % cfg.proactive.check_every == 0 {
                let f = p.predict_and_warn(&market, thr)?;
                forecasts.push((t, f));
                last_forecast = Some(f);
                if f.burst_flag {
                    hold_until = Some(t + cfg.proactive.hold_ticks);
                    let d = proactive_deltas(&cluster, &recent, mix, &f, &cfg.proactive);
                    if d.iter().any(|&x| x > 0) {
                        extra = Some(d);
                    }
                }
            }
        }

        let mut base = SchedulingAction::noop();
        if t > 0 && t % cfg.decision_interval == 0 {
            let ctx = DecisionContext { tick: t, cluster: &cluster, recent_load: &recent, mix, forecast: last_forecast.as_ref() };
            base = scheduler.decide(&ctx)?;
        }
        let source = match (base.is_noop(), extra.is_some()) {
            (false, true) => DecisionSource::Both,
            (true, true) => DecisionSource::Proactive,
            _ => DecisionSource::Scheduler,
        };
        let hold = hold_until.is_some_and(|h| t < h);
        let action = merge(base, extra, hold, k);

        arrivals.clear();
        generator.generate_into(t, &mut arrivals)?;
        for r in &arrivals {
            window[r.service_id % k] += 1.0;
        }
        window_ticks += 1;
        if window_ticks == cfg.decision_interval.min(cfg.proactive.check_every).max(1) || t + 1 == scenario.horizon {
            for (r, w) in recent.iter_mut().zip(window.iter_mut()) {
                *r = *w / window_ticks as f64;
                *w = 0.0;
            }
            window_ticks = 0;
        }

        let out = cluster.step(&action, &arrivals, &cfg.noise, &mut rng);
        record(&mut decisions, t, source, &out.changes, &action, cluster.placement_plan().counts.iter().sum::<u32>() as usize);
        if out.changes.created > 0 && first_scale_up.is_none() {
            first_scale_up = Some(t);
        }
        backlog += cluster.queued() as f64;
        let st = cluster.true_state();
        for (r, u) in util_sum.iter_mut().enumerate() {
            *u += st.mean_util(r);
        }
        for (j, l) in node_load.iter_mut().enumerate() {
            *l += st.node_util(j, 0);
        }
        if predictor.is_some() {
            market.push(generator.market_tick(t)?);
        }
    }

    let noop = SchedulingAction::noop();
    let mut drained = 0;
    while cluster.queued() > 0 && drained < cfg.drain_ticks {
        cluster.step(&noop, &[], &cfg.noise, &mut rng);
        drained += 1;
    }

    let base_ms = topology.latency.base_latency(0.0, 0.0);
    let mut samples = cluster.take_latencies();
    samples.extend(cluster.queued_ages_ms().into_iter().map(|a| a + base_ms));
    let totals = cluster.totals();
    let ticks = scenario.horizon as f64;
    let lat = if samples.is_empty() {
        LatencyStats { count: 0, mean: 0.0, std: 0.0, min: 0.0, p50: 0.0, p95: 0.0, p99: 0.0, max: 0.0 }
    } else {
        LatencyStats::from_samples(&mut samples)?
    };
    let objectives = Objectives {
        response_ms: lat.mean,
        utilization: if totals.cpu_allocated > 0.0 { (totals.cpu_used / totals.cpu_allocated).min(1.0) } else { 0.0 },
        balance: balance_degree(&node_load, cfg.weights.l_max),
    };
    let (hit_rate, hit_defined) = match &cache {
        Some(c) => {
            let s = c.stats();
            (s.memory_hit_rate, s.rate_defined)
        }
        None => (0.0, false),
    };
    debug_assert_eq!(RESOURCES.len(), 3);
    let summary = RunSummary {
        scenario_id: format!("{}/seed={}", scenario.name, scenario.seed),
        scheduler: format!(
            "{}{}",
            scheduler.name(),
            if predictor.is_some() { "+predictor" } else { "" }
        ),
        seed: cfg.seed,
        ticks: scenario.horizon,
        generated: totals.generated,
        completed: totals.completed,
        latency_mean_ms: lat.mean,
        latency_std_ms: lat.std,
        p50_ms: lat.p50,
        p95_ms: lat.p95,
        p99_ms: lat.p99,
        cpu_util_mean: util_sum[0] / ticks,
        mem_util_mean: util_sum[1] / ticks,
        net_util_mean: util_sum[2] / ticks,
        achieved_tps: totals.completed as f64 / (ticks + drained as f64) / scenario.tick_length,
        sanitized_actions: totals.sanitized,
        cache_hit_rate: hit_rate,
        cache_hit_rate_defined: hit_defined,
        fitness: fitness(&objectives, &cfg.weights),
        backlog_integral: backlog,
        first_scale_up_tick: first_scale_up,
    };
    Ok(RunOutput { summary, trace: cluster.trace_rows().to_vec(), decisions, forecasts })
}

fn record(
    out: &mut Vec<DecisionRecord>,
    tick: Tick,
    source: DecisionSource,
    ch: &AppliedChanges,
    action: &SchedulingAction,
    instances: usize,
) {
    if action.is_noop() && ch.sanitized == 0 {
        return;
    }
    out.push(DecisionRecord {
        tick,
        source,
        created: ch.created,
        removed: ch.removed,
        migrations: ch.migrations,
        quota_change: ch.quota_change,
        sanitized: ch.sanitized,
        instances,
    });
}
