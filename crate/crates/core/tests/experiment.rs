use tradesim_core::cluster::{write_trace_csv, Topology};
use tradesim_core::experiment::*;
use tradesim_core::workload::WorkloadScenario;

fn config(kind: SchedulerKind, seed: u64) -> RunConfig {
    RunConfig { scheduler: kind, seed, ..RunConfig::default() }
}

fn trace_bytes(out: &RunOutput) -> Vec<u8> {
    let mut buf = Vec::new();
    write_trace_csv(&out.trace, &mut buf).unwrap();
    buf
}

#[test]
fn every_scheduler_is_reproducible() {
    let topo = Topology::uniform(4, 4_000.0, 2, 0.8);
    let mut sc = WorkloadScenario::flat(2_000.0, 60, 5);
    sc.peak_rate = 6_000.0;
    sc.bursts = vec![tradesim_core::workload::BurstSpec { start_tick: 30, duration: 10, magnitude: 3.0 }];
    for kind in SchedulerKind::ALL {
        let cfg = RunConfig { hybrid: HybridSchedulerConfig { eval_ticks: 5, ..Default::default() }, ..config(kind, 7) };
        let a = run_experiment::<f64>(&topo, &sc, &cfg, None, None).unwrap();
        let b = run_experiment::<f64>(&topo, &sc, &cfg, None, None).unwrap();
        assert_eq!(a.summary.to_json(), b.summary.to_json(), "{kind}");
        assert_eq!(trace_bytes(&a), trace_bytes(&b), "{kind}");
        assert_eq!(a.decisions, b.decisions, "{kind}");
        assert_eq!(a.summary.generated, a.summary.completed, "{kind}");
    }
}

#[test]
fn light_flat_load_stays_near_uncontended_latency() {
    let topo = market_open_topology();
    let sc = WorkloadScenario::flat(2_000.0, 300, 2);
    let out = run_experiment::<f64>(&topo, &sc, &config(SchedulerKind::RoundRobin, 2), None, None).unwrap();
    assert!(out.summary.p95_ms <= 2.0 * topo.latency.uncontended_ms(), "{}", out.summary.p95_ms);
    assert!(out.summary.achieved_tps > 0.0);
}

#[test]
fn threshold_autoscaler_adds_capacity_under_overload() {
    let topo = scaling_topology().unwrap();
    let sc = WorkloadScenario::flat(12_000.0, 200, 4);
    let rr = run_experiment::<f64>(&topo, &sc, &config(SchedulerKind::RoundRobin, 4), None, None).unwrap();
    let th = run_experiment::<f64>(&topo, &sc, &config(SchedulerKind::ThresholdAutoscaler, 4), None, None).unwrap();
    assert!(th.summary.first_scale_up_tick.is_some());
    assert!(th.decisions.iter().any(|d| d.created > 0));
    assert!(th.summary.backlog_integral < rr.summary.backlog_integral);
    assert!(th.summary.p95_ms < rr.summary.p95_ms);
}

#[test]
fn different_seeds_give_different_runs() {
    let topo = Topology::uniform(4, 4_000.0, 2, 0.8);
    let sc = WorkloadScenario::flat(2_000.0, 40, 5);
    let a = run_experiment::<f64>(&topo, &sc, &config(SchedulerKind::Random, 1), None, None).unwrap();
    let b = run_experiment::<f64>(&topo, &sc, &config(SchedulerKind::Random, 2), None, None).unwrap();
    assert_ne!(trace_bytes(&a), trace_bytes(&b));
}

#[test]
fn decisions_csv_has_one_row_per_decision() {
    let topo = scaling_topology().unwrap();
    let sc = WorkloadScenario::flat(12_000.0, 100, 4);
    let out = run_experiment::<f64>(&topo, &sc, &config(SchedulerKind::ThresholdAutoscaler, 4), None, None).unwrap();
    let mut buf = Vec::new();
    write_decisions_csv(&out.decisions, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("tick,source,created,removed,migrations,quota_change,sanitized,instances"));
    assert_eq!(text.lines().count(), out.decisions.len() + 1);
}

#[test]
fn invalid_run_configs_are_rejected() {
    let topo = Topology::uniform(4, 4_000.0, 2, 0.8);
    let sc = WorkloadScenario::flat(100.0, 10, 1);
    let mut cfg = RunConfig { decision_interval: 0, ..RunConfig::default() };
    assert!(matches!(run_experiment::<f64>(&topo, &sc, &cfg, None, None), Err(ExperimentError::Config(_))));
    cfg = RunConfig { threshold: ThresholdConfig { scale_up: 0.2, scale_down: 0.5, cooldown: 1 }, ..RunConfig::default() };
    assert!(run_experiment::<f64>(&topo, &sc, &cfg, None, None).is_err());
}

#[test]
fn run_config_json_round_trips_with_defaults() {
    let cfg = RunConfig { scheduler: SchedulerKind::Hybrid, seed: 9, ..RunConfig::default() };
    let text = serde_json::to_string(&cfg).unwrap();
    let back: RunConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    let partial: RunConfig = serde_json::from_str(r#"{"scheduler": "threshold-autoscaler"}"#).unwrap();
    assert_eq!(partial.scheduler, SchedulerKind::ThresholdAutoscaler);
    assert_eq!(partial.decision_interval, RunConfig::default().decision_interval);
}

#[test]
fn cache_model_feeds_hit_rates_into_the_run() {
    let topo = Topology::uniform(4, 4_000.0, 2, 0.8);
    let sc = WorkloadScenario::flat(1_000.0, 30, 1);
    let cfg = RunConfig { cache: Some(CacheSettings { config: Default::default(), workload: Default::default() }), ..RunConfig::default() };
    let warm = run_experiment::<f64>(&topo, &sc, &cfg, None, None).unwrap();
    let cold = run_experiment::<f64>(&topo, &sc, &RunConfig::default(), None, None).unwrap();
    assert!(warm.summary.cache_hit_rate_defined && warm.summary.cache_hit_rate > 0.0);
    assert!(warm.summary.latency_mean_ms < cold.summary.latency_mean_ms);
}
