use crate::cluster::{ClusterError, LatencyModel, Topology};
use crate::workload::{default_service_mix, BurstSpec, Ramp, SessionClock, TidalPoint, Tick, WorkloadScenario};

/// Tick of the 09:30 open in [`market_open_scenario`].
pub const OPEN_TICK_MARKET: Tick = 900;
/// Tick of the 09:30 open in [`tidal_burst_day`].
pub const OPEN_TICK_TIDAL: Tick = 600;

/// Pre-open login ramp from 1,000 to 10,000 users over 15 minutes
/// (500 to 5,000 TPS), a 3× surge for two minutes at the open, then five
/// minutes of normal trading.
pub fn market_open_scenario(seed: u64) -> WorkloadScenario {
    WorkloadScenario {
        name: "market-open".into(),
        base_rate: 5_000.0,
        peak_rate: 15_000.0,
        ramp: Some(Ramp { start_tick: 0, duration_ticks: OPEN_TICK_MARKET, start_users: 1_000.0, end_users: 10_000.0 }),
        tidal_profile: Vec::new(),
        bursts: vec![BurstSpec { start_tick: OPEN_TICK_MARKET, duration: 120, magnitude: 3.0 }],
        horizon: OPEN_TICK_MARKET + 300,
        tick_length: 1.0,
        seed,
        service_mix: default_service_mix(),
        users_to_rate: None,
        clock: SessionClock { start_time_s: 33_300.0, ..SessionClock::default() },
    }
}

/// One trading morning from 09:20: a tidal swell toward the open, a surge of
/// `magnitude` for two minutes at 09:30, and a slow decline after it.
pub fn tidal_burst_day(seed: u64, day: u32, magnitude: f64) -> WorkloadScenario {
    WorkloadScenario {
        name: format!("tidal-burst-d{day}"),
        base_rate: 5_000.0,
        peak_rate: 5_000.0 * magnitude.max(1.0),
        ramp: None,
        tidal_profile: vec![
            TidalPoint { tick_offset: 0, multiplier: 0.7 },
            TidalPoint { tick_offset: OPEN_TICK_TIDAL, multiplier: 1.0 },
            TidalPoint { tick_offset: OPEN_TICK_TIDAL + 300, multiplier: 0.85 },
        ],
        bursts: vec![BurstSpec { start_tick: OPEN_TICK_TIDAL, duration: 120, magnitude }],
        horizon: OPEN_TICK_TIDAL + 300,
        tick_length: 1.0,
        seed,
        service_mix: default_service_mix(),
        users_to_rate: None,
        clock: SessionClock { start_time_s: 33_600.0, start_day: day, ..SessionClock::default() },
    }
}

/// `days` consecutive mornings with surge magnitudes cycling over
/// 2.5, 3.0 and 3.5.
pub fn training_days(seed: u64, first_day: u32, days: u32) -> Vec<WorkloadScenario> {
    (0..days)
        .map(|d| {
            let day = first_day + d;
            let magnitude = [2.5, 3.0, 3.5][(day % 3) as usize];
            tidal_burst_day(seed.wrapping_add(day as u64), day, magnitude)
        })
        .collect()
}

/// Eight nodes with two instances per service placed round-robin, every
/// instance at the same quota, CPU limited to the quota.
pub fn market_open_topology() -> Topology {
    let mut t = Topology::uniform(8, 10_000.0, 2, 0.9);
    t.sim.burst_ratio = 0.0;
    t
}

/// Capacity sized per service for 5,000 TPS at about 2% utilization, so
/// contention is negligible.
pub fn calibration_topology() -> Result<Topology, ClusterError> {
    Topology::provisioned(&default_service_mix(), 5_000.0, 12, 100_000.0, 0.25, 0.02)
}

/// Sized for 5,000 TPS at 60% utilization with instances of a tenth of a
/// node and spare nodes to scale into; CPU limited to the quota.
pub fn scaling_topology() -> Result<Topology, ClusterError> {
    let mut t = Topology::provisioned(&default_service_mix(), 5_000.0, 16, 10_000.0, 0.1, 0.6)?;
    t.sim.burst_ratio = 0.0;
    Ok(t)
}

/// One node, one instance per service with quota proportional to the
/// service's CPU demand, so every instance runs at the same utilization:
/// `rho_at_capacity` when `capacity_rate` requests arrive per tick.
pub fn load_step_topology(capacity_rate: f64, rho_at_capacity: f64) -> Result<Topology, ClusterError> {
    if !(capacity_rate > 0.0 && rho_at_capacity > 0.0) {
        return Err(ClusterError::InvalidTopology("capacity rate and utilization must be > 0".into()));
    }
    let mix = default_service_mix();
    let wsum: f64 = mix.iter().map(|m| m.weight).sum();
    let demand: Vec<f64> = mix.iter().map(|m| m.weight / wsum * m.work_units).collect();
    let per_request: f64 = demand.iter().sum();
    let mut t = Topology::from_mix(&mix, 1, capacity_rate * per_request / rho_at_capacity, 1, 1.0);
    for (s, d) in demand.iter().enumerate() {
        let q = d / per_request;
        t.services[s].default_quota = q;
        t.placement[s].quota = q;
    }
    t.sim.burst_ratio = 0.0;
    Ok(t)
}

/// Utilization at load level 1 that best fits `latencies_ms` observed at
/// load `levels` (multiples of capacity), in log space, with utilization
/// proportional to load under the uncontended latency model.
pub fn fit_reference_utilization(levels: &[f64], latencies_ms: &[f64], model: &LatencyModel) -> Option<f64> {
    let top = levels.iter().copied().fold(0.0, f64::max);
    if levels.len() != latencies_ms.len() || levels.is_empty() || !(top > 0.0) {
        return None;
    }
    let loss = |r: f64| -> f64 {
        levels
            .iter()
            .zip(latencies_ms)
            .map(|(&l, &y)| (model.base_latency(r * l, 0.0).ln() - y.ln()).powi(2))
            .sum()
    };
    let (mut lo, mut hi) = (0.0, model.rho_cap / top);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if loss(a) <= loss(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    Some(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn market_open_peaks_at_the_open() {
        let s = market_open_scenario(1);
        s.validate().unwrap();
        assert_eq!(s.rate_profile(0).unwrap(), 500.0);
        assert_eq!(s.rate_profile(OPEN_TICK_MARKET - 1).unwrap(), 500.0 + 4_500.0 * 899.0 / 900.0);
        assert_eq!(s.rate_profile(OPEN_TICK_MARKET).unwrap(), 15_000.0);
        assert_eq!(s.rate_profile(OPEN_TICK_MARKET + 120).unwrap(), 5_000.0);
        let (_, tod) = s.clock.day_and_time(OPEN_TICK_MARKET, 1.0);
        assert_eq!(tod, s.clock.open_s);
    }

    #[test]
    fn tidal_day_opens_at_its_open_tick() {
        let s = tidal_burst_day(3, 2, 3.0);
        s.validate().unwrap();
        let (day, tod) = s.clock.day_and_time(OPEN_TICK_TIDAL, 1.0);
        assert_eq!((day, tod), (2, s.clock.open_s));
        assert_eq!(s.rate_profile(OPEN_TICK_TIDAL).unwrap(), 15_000.0);
        assert!(s.rate_profile(OPEN_TICK_TIDAL - 1).unwrap() < 5_000.0);
    }

    #[test]
    fn preset_topologies_validate() {
        market_open_topology().validate().unwrap();
        calibration_topology().unwrap().validate().unwrap();
        scaling_topology().unwrap().validate().unwrap();
        load_step_topology(5_000.0, 0.4).unwrap().validate().unwrap();
    }

    #[test]
    fn load_step_utilization_is_uniform() {
        let t = load_step_topology(1_000.0, 0.5).unwrap();
        let mix = default_service_mix();
        let cpu = t.nodes[0].cpu_capacity;
        for (s, m) in mix.iter().enumerate() {
            let demand = 1_000.0 * m.weight * m.work_units;
            assert!((demand / (t.placement[s].quota * cpu) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_recovers_a_noise_free_reference() {
        let m = LatencyModel::default();
        let levels = [0.5, 1.0, 1.5];
        let ys: Vec<f64> = levels.iter().map(|&l| m.base_latency(0.3 * l, 0.0)).collect();
        assert!((fit_reference_utilization(&levels, &ys, &m).unwrap() - 0.3).abs() < 1e-9);
        assert!(fit_reference_utilization(&[], &[], &m).is_none());
    }
}
