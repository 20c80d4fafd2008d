use proptest::prelude::*;
use tradesim_core::cluster::*;
use tradesim_core::rng::rng_for;
use tradesim_core::workload::{WorkloadGenerator, WorkloadScenario};

fn arb_action(k: usize, n: usize) -> impl Strategy<Value = SchedulingAction> {
    (
        prop::collection::vec(-3i32..4, 0..k + 2),
        prop::collection::vec(prop::bool::weighted(0.05), 0..k * n + 3),
        prop::option::of(prop::collection::vec(-0.5f64..1.5, k)),
        prop::option::of(prop::collection::vec(-0.1f64..0.5, k)),
    )
        .prop_map(|(instance_delta, migration, priority, quota)| SchedulingAction {
            instance_delta,
            migration,
            priority,
            quota,
            target_placement: None,
        })
}

fn check_invariants(c: &Cluster) -> Result<(), TestCaseError> {
    let topo = c.topology();
    for s in 0..c.service_count() {
        prop_assert!(c.instance_count(s) >= 1, "service {} lost every instance", s);
    }
    for (j, q) in c.node_quota().iter().enumerate() {
        prop_assert!(*q <= 1.0 + 1e-9, "node {} quota {}", j, q);
    }
    let per_node = c.instances().iter().fold(vec![0u32; c.node_count()], |mut acc, i| {
        acc[i.node] += 1;
        acc
    });
    prop_assert!(per_node.iter().all(|&m| m <= topo.sim.max_instances_per_node));
    let t = c.totals();
    prop_assert_eq!(t.generated, t.completed + c.queued());
    let st = c.true_state();
    for j in 0..c.node_count() {
        for r in 0..3 {
            let u = st.node_util(j, r);
            prop_assert!(u.is_finite() && (0.0..=1.0 + 1e-9).contains(&u), "util {}", u);
        }
    }
    prop_assert!(c.latencies().iter().all(|l| l.is_finite() && *l > 0.0));
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn arbitrary_actions_preserve_cluster_invariants(
        actions in prop::collection::vec(arb_action(8, 4), 1..25),
        rate in 10.0f64..8_000.0,
        seed in 0u64..1000,
    ) {
        let mut c = Cluster::new(Topology::uniform(4, 4000.0, 2, 0.8)).unwrap();
        c.set_record_mode(RecordMode::Latencies);
        let g = WorkloadGenerator::new(WorkloadScenario::flat(rate, actions.len() as u64, seed)).unwrap();
        let mut rng = rng_for(seed, 3, 0);
        for (t, a) in actions.iter().enumerate() {
            let arrivals = g.generate_tick(t as u64).unwrap();
            c.step(a, &arrivals, &NoiseSpec { util_std: 0.05 }, &mut rng);
            check_invariants(&c)?;
        }
    }

    #[test]
    fn target_placements_are_realized_or_sanitized(
        counts in prop::collection::vec(0u32..4, 32),
        quota in prop::collection::vec(0.01f64..0.3, 8),
    ) {
        let mut c = Cluster::new(Topology::uniform(4, 4000.0, 2, 0.8)).unwrap();
        let plan = PlacementPlan { services: 8, nodes: 4, counts, quota, priority: vec![0.5; 8] };
        let feasible = plan.node_quota().iter().all(|&q| q <= 1.0)
            && (0..8).all(|s| plan.service_total(s) >= 1)
            && (0..4).all(|j| (0..8).map(|s| plan.count(s, j)).sum::<u32>() <= 16);
        let action = SchedulingAction { target_placement: Some(plan.clone()), ..SchedulingAction::noop() };
        let out = c.step(&action, &[], &NoiseSpec::default(), &mut rng_for(0, 0, 0));
        if feasible {
            prop_assert_eq!(c.placement_plan().counts, plan.counts);
            prop_assert_eq!(out.changes.sanitized, 0);
        }
        check_invariants(&c)?;
    }

    #[test]
    fn latency_is_monotone_in_utilization(a in 0.0f64..0.95, b in 0.0f64..0.95, hit in 0.0f64..1.0) {
        let m = LatencyModel::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(m.base_latency(lo, hit) <= m.base_latency(hi, hit));
        prop_assert!(m.base_latency(lo, hit) >= m.uncontended_ms() - m.data_ms * hit - 1e-9);
    }
}

#[test]
fn identical_seeds_give_identical_runs() {
    let run = || {
        let mut c = Cluster::new(Topology::uniform(4, 4000.0, 2, 0.8)).unwrap();
        c.set_record_mode(RecordMode::Trace);
        let g = WorkloadGenerator::new(WorkloadScenario::flat(3_000.0, 50, 9)).unwrap();
        let mut rng = rng_for(9, 3, 0);
        for t in 0..50 {
            c.step(&SchedulingAction::noop(), &g.generate_tick(t).unwrap(), &NoiseSpec { util_std: 0.02 }, &mut rng);
        }
        let mut buf = Vec::new();
        write_trace_csv(c.trace_rows(), &mut buf).unwrap();
        (c.totals(), c.latencies().to_vec(), buf)
    };
    assert_eq!(run(), run());
}

#[test]
fn jitter_free_idle_requests_take_exactly_the_component_sum() {
    let mut topo = Topology::uniform(2, 100_000.0, 1, 0.5);
    topo.latency.jitter_enabled = false;
    let mut c = Cluster::new(topo).unwrap();
    c.set_record_mode(RecordMode::Latencies);
    let g = WorkloadGenerator::new(WorkloadScenario::flat(50.0, 1, 1)).unwrap();
    c.step(&SchedulingAction::noop(), &g.generate_tick(0).unwrap(), &NoiseSpec::default(), &mut rng_for(1, 3, 0));
    assert!(!c.latencies().is_empty());
    assert!(c.latencies().iter().all(|&l| l == 85.0));
}

#[test]
fn jitter_sigma_reproduces_the_target_quantile() {
    let s = calibrate_jitter_sigma(85.0, 120.0).unwrap();
    let q = (s * Z95 - 0.5 * s * s).exp() * 85.0;
    assert!((q - 120.0).abs() < 1e-9);
    assert!(calibrate_jitter_sigma(85.0, 85.0 * 10.0).is_none());
}
