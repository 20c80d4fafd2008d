use proptest::prelude::*;
use tradesim_core::workload::*;

#[test]
fn flat_arrivals_have_poisson_moments() {
    let g = WorkloadGenerator::new(WorkloadScenario::flat(50.0, 10_000, 3)).unwrap();
    let counts: Vec<f64> = (0..10_000).map(|t| g.arrival_count(t).unwrap() as f64).collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((mean - 50.0).abs() <= 3.0 * (50.0f64 / n).sqrt(), "mean {mean}");
    // Var of the sample variance of Poisson(λ) is about (λ + 2λ²)/n.
    assert!((var - 50.0).abs() <= 4.0 * ((50.0 + 2.0 * 2500.0) / n).sqrt(), "var {var}");
}

#[test]
fn service_shares_follow_the_mix() {
    let sc = WorkloadScenario::flat(2_000.0, 500, 11);
    let g = WorkloadGenerator::new(sc.clone()).unwrap();
    let mut per = vec![0u64; sc.service_count()];
    let mut total = 0u64;
    for t in 0..500 {
        for r in g.generate_tick(t).unwrap() {
            assert_eq!(r.arrival_tick, t);
            assert_eq!(r.work_units, sc.service_mix[r.service_id].work_units);
            per[r.service_id] += 1;
            total += 1;
        }
    }
    let wsum: f64 = sc.service_mix.iter().map(|m| m.weight).sum();
    for (s, m) in sc.service_mix.iter().enumerate() {
        let p = m.weight / wsum;
        let got = per[s] as f64 / total as f64;
        assert!((got - p).abs() <= 4.0 * (p * (1.0 - p) / total as f64).sqrt(), "service {s}: {got} vs {p}");
    }
}

#[test]
fn burst_multiplies_rate_inside_its_window_only() {
    let mut sc = WorkloadScenario::flat(1_000.0, 100, 1);
    sc.peak_rate = 3_000.0;
    sc.bursts = vec![BurstSpec { start_tick: 40, duration: 10, magnitude: 3.0 }];
    let g = WorkloadGenerator::new(sc).unwrap();
    assert_eq!(g.rate(39).unwrap(), 1_000.0);
    assert_eq!(g.rate(40).unwrap(), 3_000.0);
    assert_eq!(g.rate(49).unwrap(), 3_000.0);
    assert_eq!(g.rate(50).unwrap(), 1_000.0);
}

#[test]
fn scenario_json_round_trips() {
    let mut sc = WorkloadScenario::flat(1_234.5, 77, 42);
    sc.peak_rate = 4_000.0;
    sc.ramp = Some(Ramp { start_tick: 3, duration_ticks: 20, start_users: 10.0, end_users: 100.0 });
    sc.tidal_profile = vec![TidalPoint { tick_offset: 0, multiplier: 0.5 }, TidalPoint { tick_offset: 50, multiplier: 1.0 }];
    sc.bursts = vec![BurstSpec { start_tick: 30, duration: 5, magnitude: 2.0 }];
    let back = WorkloadScenario::from_json(&sc.to_json()).unwrap();
    assert_eq!(back, sc);
}

#[test]
fn minimal_scenario_json_takes_defaults() {
    let sc = WorkloadScenario::from_json(r#"{"base_rate": 100, "peak_rate": 100, "horizon": 10, "seed": 1}"#).unwrap();
    assert_eq!(sc.tick_length, 1.0);
    assert_eq!(sc.service_mix, default_service_mix());
}

#[test]
fn market_ticks_report_the_realized_volume() {
    let g = WorkloadGenerator::new(WorkloadScenario::flat(300.0, 20, 8)).unwrap();
    for t in 0..20 {
        let m = g.market_tick(t).unwrap();
        assert_eq!(m.volume, g.generate_tick(t).unwrap().len() as f64);
        assert!(m.volatility > 0.0 && m.order_cancel_ratio >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generation_depends_only_on_seed_and_tick(seed in any::<u64>(), t in 0u64..50, rate in 1.0f64..2_000.0) {
        let g1 = WorkloadGenerator::new(WorkloadScenario::flat(rate, 50, seed)).unwrap();
        let g2 = WorkloadGenerator::new(WorkloadScenario::flat(rate, 50, seed)).unwrap();
        for u in 0..t {
            g2.generate_tick(u).unwrap();
        }
        prop_assert_eq!(g1.generate_tick(t).unwrap(), g2.generate_tick(t).unwrap());
    }

    #[test]
    fn rates_stay_within_base_and_peak_bounds(seed in any::<u64>(), mag in 1.0f64..4.0, t in 0u64..200) {
        let mut sc = WorkloadScenario::flat(500.0, 200, seed);
        sc.peak_rate = 500.0 * mag;
        sc.bursts = vec![BurstSpec { start_tick: 100, duration: 30, magnitude: mag }];
        let r = WorkloadGenerator::new(sc).unwrap().rate(t).unwrap();
        prop_assert!(r > 0.0 && r <= 500.0 * mag + 1e-9);
    }

    #[test]
    fn negative_or_inverted_rates_are_rejected(base in -100.0f64..0.0) {
        prop_assert!(WorkloadGenerator::new(WorkloadScenario::flat(base, 10, 1)).is_err());
        let mut sc = WorkloadScenario::flat(100.0, 10, 1);
        sc.peak_rate = 50.0;
        prop_assert!(WorkloadGenerator::new(sc).is_err());
    }
}
