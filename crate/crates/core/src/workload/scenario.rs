use std::path::Path;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rand_distr::{Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{Tick, WorkloadError};
use crate::rng::{rng_for, stream};

/// Linear growth of concurrent users over a window of ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub start_tick: Tick,
    pub duration_ticks: Tick,
    pub start_users: f64,
    pub end_users: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TidalPoint {
    pub tick_offset: Tick,
    pub multiplier: f64,
}

/// Rectangular rate surge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstSpec {
    pub start_tick: Tick,
    pub duration: Tick,
    pub magnitude: f64,
}

impl BurstSpec {
    pub fn active_at(&self, t: Tick) -> bool {
        t >= self.start_tick && t < self.start_tick + self.duration
    }
}

/// One entry of the service catalog: relative share of traffic and the
/// per-request cost it carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceMix {
    pub name: String,
    pub weight: f64,
    /// CPU-milliseconds consumed per request.
    pub work_units: f64,
    pub payload_bytes: u32,
}

/// The eight core services of the benchmark trading system.
pub fn default_service_mix() -> Vec<ServiceMix> {
    let rows: [(&str, f64, f64, u32); 8] = [
        ("account-auth", 0.15, 1.0, 512),
        ("market-data-push", 0.25, 2.0, 2048),
        ("trade-commission", 0.15, 3.0, 1024),
        ("order-matching", 0.15, 8.0, 768),
        ("clearing-settlement", 0.05, 4.0, 1536),
        ("risk-control", 0.15, 6.0, 1024),
        ("ledger", 0.05, 2.0, 1024),
        ("notification", 0.05, 1.0, 256),
    ];
    rows.iter()
        .map(|&(name, weight, work_units, payload_bytes)| ServiceMix {
            name: name.to_string(),
            weight,
            work_units,
            payload_bytes,
        })
        .collect()
}

/// Maps ticks onto wall-clock time of a trading day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionClock {
    /// Seconds since midnight at tick 0.
    pub start_time_s: f64,
    pub open_s: f64,
    pub close_s: f64,
    /// Day index of tick 0; day-of-week is `day % 7` with 0 = Monday.
    pub start_day: u32,
}

impl Default for SessionClock {
    fn default() -> Self {
        // 09:25, five minutes before a 09:30 open; 15:00 close.
        Self { start_time_s: 33_900.0, open_s: 34_200.0, close_s: 54_000.0, start_day: 0 }
    }
}

impl SessionClock {
    pub fn seconds_at(&self, t: Tick, tick_length: f64) -> f64 {
        self.start_time_s + t as f64 * tick_length
    }

    /// (day index, seconds since midnight) at tick `t`.
    pub fn day_and_time(&self, t: Tick, tick_length: f64) -> (u32, f64) {
        let s = self.seconds_at(t, tick_length);
        let day_off = (s / 86_400.0).floor();
        (self.start_day + day_off as u32, s - day_off * 86_400.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadScenario {
    #[serde(default)]
    pub name: String,
    pub base_rate: f64,
    pub peak_rate: f64,
    #[serde(default)]
    pub ramp: Option<Ramp>,
    #[serde(default)]
    pub tidal_profile: Vec<TidalPoint>,
    #[serde(default)]
    pub bursts: Vec<BurstSpec>,
    pub horizon: Tick,
    #[serde(default = "default_tick_length")]
    pub tick_length: f64,
    pub seed: u64,
    #[serde(default = "default_service_mix")]
    pub service_mix: Vec<ServiceMix>,
    /// Requests per second contributed by one concurrent user. When absent
    /// and a ramp is configured, `base_rate / ramp.end_users` is used so the
    /// ramp settles at the base rate.
    #[serde(default)]
    pub users_to_rate: Option<f64>,
    #[serde(default)]
    pub clock: SessionClock,
}

fn default_tick_length() -> f64 {
    1.0
}

impl WorkloadScenario {
    /// Constant-rate scenario with the default service catalog.
    pub fn flat(base_rate: f64, horizon: Tick, seed: u64) -> Self {
        Self {
            name: "flat".into(),
            base_rate,
            peak_rate: base_rate,
            ramp: None,
            tidal_profile: Vec::new(),
            bursts: Vec::new(),
            horizon,
            tick_length: 1.0,
            seed,
            service_mix: default_service_mix(),
            users_to_rate: None,
            clock: SessionClock::default(),
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: String| Err(WorkloadError::InvalidScenario(m));
        if !(self.base_rate > 0.0) {
            return bad(format!("base_rate must be > 0, got {}", self.base_rate));
        }
        if !(self.peak_rate >= self.base_rate) {
            return bad(format!("peak_rate {} below base_rate {}", self.peak_rate, self.base_rate));
        }
        if self.horizon == 0 {
            return bad("horizon must be > 0".into());
        }
        if !(self.tick_length > 0.0) {
            return bad("tick_length must be > 0".into());
        }
        if let Some(r) = &self.ramp {
            if r.duration_ticks == 0 {
                return bad("ramp.duration_ticks must be > 0".into());
            }
            if !(r.start_users >= 0.0 && r.end_users > 0.0) {
                return bad("ramp user counts must be non-negative with end_users > 0".into());
            }
        }
        if let Some(c) = self.users_to_rate {
            if !(c > 0.0) {
                return bad("users_to_rate must be > 0".into());
            }
        }
        for p in &self.tidal_profile {
            if !(p.multiplier > 0.0) {
                return bad(format!("tidal multiplier at offset {} must be > 0", p.tick_offset));
            }
        }
        for b in &self.bursts {
            if b.duration < 1 || !(b.magnitude >= 1.0) {
                return bad(format!("burst at {} needs duration >= 1 and magnitude >= 1", b.start_tick));
            }
        }
        if self.service_mix.is_empty() {
            return bad("service_mix is empty".into());
        }
        for s in &self.service_mix {
            if !(s.weight >= 0.0) || !(s.work_units > 0.0) {
                return bad(format!("service {} needs weight >= 0 and work_units > 0", s.name));
            }
        }
        if !(self.service_mix.iter().map(|s| s.weight).sum::<f64>() > 0.0) {
            return bad("service_mix weights sum to zero".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, WorkloadError> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Self, WorkloadError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn service_count(&self) -> usize {
        self.service_mix.len()
    }

    fn users_at(&self, ramp: &Ramp, t: Tick) -> f64 {
        if t <= ramp.start_tick {
            ramp.start_users
        } else if t >= ramp.start_tick + ramp.duration_ticks {
            ramp.end_users
        } else {
            let frac = (t - ramp.start_tick) as f64 / ramp.duration_ticks as f64;
            ramp.start_users + (ramp.end_users - ramp.start_users) * frac
        }
    }

    fn tidal_multiplier(&self, t: Tick) -> f64 {
        let pts = &self.tidal_profile;
        match pts.len() {
            0 => 1.0,
            1 => pts[0].multiplier,
            _ => {
                if t <= pts[0].tick_offset {
                    return pts[0].multiplier;
                }
                for w in pts.windows(2) {
                    let (a, b) = (&w[0], &w[1]);
                    if t <= b.tick_offset {
                        let span = (b.tick_offset - a.tick_offset) as f64;
                        if span == 0.0 {
                            return b.multiplier;
                        }
                        let frac = (t - a.tick_offset) as f64 / span;
                        return a.multiplier + (b.multiplier - a.multiplier) * frac;
                    }
                }
                pts[pts.len() - 1].multiplier
            }
        }
    }

    pub fn burst_active(&self, t: Tick) -> bool {
        self.bursts.iter().any(|b| b.active_at(t))
    }

    /// Arrival rate λ(t) in requests per second. Deterministic.
    pub fn rate_profile(&self, t: Tick) -> Result<f64, WorkloadError> {
        if t >= self.horizon {
            return Err(WorkloadError::OutOfHorizon { t, horizon: self.horizon });
        }
        let base = match &self.ramp {
            Some(r) => {
                let coeff = self.users_to_rate.unwrap_or(self.base_rate / r.end_users);
                self.users_at(r, t) * coeff
            }
            None => self.base_rate,
        };
        let burst: f64 = self.bursts.iter().filter(|b| b.active_at(t)).map(|b| b.magnitude).product();
        Ok((base * self.tidal_multiplier(t) * burst).min(self.peak_rate))
    }
}

/// A single transaction request entering the cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Request {
    pub arrival_tick: Tick,
    pub service_id: usize,
    pub work_units: f64,
    pub payload_bytes: u32,
}

/// Per-tick market observation: the raw material for predictor features and
/// the dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketTick {
    pub tick: Tick,
    pub day: u32,
    pub time_of_day_s: f64,
    pub volume: f64,
    pub volatility: f64,
    pub order_cancel_ratio: f64,
    pub burst_active: bool,
    pub busiest_util: f64,
}

/// Scenario plus precomputed sampling tables.
#[derive(Debug, Clone)]
pub struct WorkloadGenerator {
    scenario: WorkloadScenario,
    mix: WeightedIndex<f64>,
}

impl WorkloadGenerator {
    pub fn new(scenario: WorkloadScenario) -> Result<Self, WorkloadError> {
        scenario.validate()?;
        let mix = WeightedIndex::new(scenario.service_mix.iter().map(|s| s.weight))
            .map_err(|e| WorkloadError::InvalidScenario(format!("service_mix: {e}")))?;
        Ok(Self { scenario, mix })
    }

    pub fn scenario(&self) -> &WorkloadScenario {
        &self.scenario
    }

    pub fn rate(&self, t: Tick) -> Result<f64, WorkloadError> {
        self.scenario.rate_profile(t)
    }

    fn draw_count<R: Rng>(mean: f64, rng: &mut R) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        let poisson = Poisson::new(mean).expect("positive finite Poisson mean");
        poisson.sample(rng) as u64
    }

    /// Number of arrivals at tick `t`; equals `generate_tick(t).len()`.
    pub fn arrival_count(&self, t: Tick) -> Result<u64, WorkloadError> {
        let mean = self.rate(t)? * self.scenario.tick_length;
        let mut rng = rng_for(self.scenario.seed, stream::ARRIVALS, t);
        Ok(Self::draw_count(mean, &mut rng))
    }

    pub fn generate_tick(&self, t: Tick) -> Result<Vec<Request>, WorkloadError> {
        let mut out = Vec::new();
        self.generate_into(t, &mut out)?;
        Ok(out)
    }

    /// Appends the arrivals of tick `t` to `out`.
    pub fn generate_into(&self, t: Tick, out: &mut Vec<Request>) -> Result<(), WorkloadError> {
        let mean = self.rate(t)? * self.scenario.tick_length;
        let mut rng = rng_for(self.scenario.seed, stream::ARRIVALS, t);
        let n = Self::draw_count(mean, &mut rng);
        out.reserve(n as usize);
        for _ in 0..n {
            let service_id = self.mix.sample(&mut rng);
            let svc = &self.scenario.service_mix[service_id];
            out.push(Request {
                arrival_tick: t,
                service_id,
                work_units: svc.work_units,
                payload_bytes: svc.payload_bytes,
            });
        }
        Ok(())
    }

    /// Market observation at tick `t`. `busiest_util` is a load proxy
    /// (λ/peak) unless the caller overwrites it with simulated utilization.
    pub fn market_tick(&self, t: Tick) -> Result<MarketTick, WorkloadError> {
        let sc = &self.scenario;
        let rate = self.rate(t)?;
        let volume = self.arrival_count(t)? as f64;
        let mut rng = rng_for(sc.seed, stream::MARKET, t);
        let z: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
        let burst_active = sc.burst_active(t);
        let volatility = 0.01 * (rate / sc.base_rate).sqrt() * (0.1 * z.sample(&mut rng)).exp();
        let order_cancel_ratio =
            (2.0 + if burst_active { 0.5 } else { 0.0 } + 0.1 * z.sample(&mut rng)).max(0.0);
        let (day, time_of_day_s) = sc.clock.day_and_time(t, sc.tick_length);
        Ok(MarketTick {
            tick: t,
            day,
            time_of_day_s,
            volume,
            volatility,
            order_cancel_ratio,
            burst_active,
            busiest_util: (rate / sc.peak_rate).min(1.0),
        })
    }

    pub fn market_series(&self) -> Result<Vec<MarketTick>, WorkloadError> {
        (0..self.scenario.horizon).map(|t| self.market_tick(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramped() -> WorkloadScenario {
        let mut s = WorkloadScenario::flat(5000.0, 2000, 1);
        s.peak_rate = 15_000.0;
        s.ramp = Some(Ramp { start_tick: 0, duration_ticks: 900, start_users: 1000.0, end_users: 10_000.0 });
        s
    }

    #[test]
    fn flat_profile_is_identity() {
        let s = WorkloadScenario::flat(5000.0, 100, 1);
        for t in [0, 17, 99] {
            assert_eq!(s.rate_profile(t).unwrap(), 5000.0);
        }
    }

    #[test]
    fn ramp_midpoint_is_mean_rate() {
        let s = ramped();
        let lo = s.rate_profile(0).unwrap();
        let hi = s.rate_profile(900).unwrap();
        assert_eq!(lo, 500.0);
        assert_eq!(hi, 5000.0);
        assert_eq!(s.rate_profile(450).unwrap(), (lo + hi) / 2.0);
    }

    #[test]
    fn triple_burst_reaches_peak() {
        let mut s = WorkloadScenario::flat(5000.0, 100, 1);
        s.peak_rate = 15_000.0;
        s.bursts.push(BurstSpec { start_tick: 10, duration: 5, magnitude: 3.0 });
        assert_eq!(s.rate_profile(12).unwrap(), 15_000.0);
        assert_eq!(s.rate_profile(15).unwrap(), 5000.0);
    }

    #[test]
    fn out_of_horizon_is_range_error() {
        let s = WorkloadScenario::flat(10.0, 5, 1);
        assert!(matches!(s.rate_profile(5), Err(WorkloadError::OutOfHorizon { .. })));
    }

    #[test]
    fn tidal_profile_interpolates() {
        let mut s = WorkloadScenario::flat(100.0, 100, 1);
        s.peak_rate = 1000.0;
        s.tidal_profile = vec![
            TidalPoint { tick_offset: 0, multiplier: 1.0 },
            TidalPoint { tick_offset: 10, multiplier: 2.0 },
        ];
        assert_eq!(s.rate_profile(5).unwrap(), 150.0);
        assert_eq!(s.rate_profile(50).unwrap(), 200.0);
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut s = WorkloadScenario::flat(10.0, 5, 1);
        s.peak_rate = 5.0;
        assert!(s.validate().is_err());
        let mut s = WorkloadScenario::flat(10.0, 5, 1);
        s.bursts.push(BurstSpec { start_tick: 0, duration: 0, magnitude: 2.0 });
        assert!(s.validate().is_err());
        let mut s = WorkloadScenario::flat(10.0, 5, 1);
        s.tidal_profile.push(TidalPoint { tick_offset: 0, multiplier: 0.0 });
        assert!(s.validate().is_err());
    }

    #[test]
    fn zero_rate_tick_is_empty() {
        let mut s = WorkloadScenario::flat(10.0, 5, 1);
        s.ramp = Some(Ramp { start_tick: 0, duration_ticks: 4, start_users: 0.0, end_users: 100.0 });
        let g = WorkloadGenerator::new(s).unwrap();
        assert!(g.generate_tick(0).unwrap().is_empty());
    }

    #[test]
    fn generation_is_reproducible_per_tick() {
        let g = WorkloadGenerator::new(WorkloadScenario::flat(300.0, 50, 9)).unwrap();
        let a = g.generate_tick(17).unwrap();
        let b = g.generate_tick(17).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len() as u64, g.arrival_count(17).unwrap());
        assert!(a.iter().all(|r| r.service_id < 8 && r.work_units > 0.0));
    }

    #[test]
    fn clock_maps_ticks_to_session_time() {
        let c = SessionClock::default();
        let (day, tod) = c.day_and_time(300, 1.0);
        assert_eq!(day, 0);
        assert_eq!(tod, c.open_s);
    }
}
