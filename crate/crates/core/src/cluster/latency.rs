use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Standard normal 95th percentile.
pub const Z95: f64 = 1.644_853_626_951_472_2;

/// Jitter σ of a mean-one lognormal multiplier whose 95th percentile sits at
/// `p95 / mean` times the mean. Takes the smaller root of
/// `σ²/2 − z₉₅·σ + ln(p95/mean) = 0`.
pub fn calibrate_jitter_sigma(mean_ms: f64, p95_ms: f64) -> Option<f64> {
    if !(mean_ms > 0.0 && p95_ms > 0.0) {
        return None;
    }
    let ln_ratio = (p95_ms / mean_ms).ln();
    let disc = Z95 * Z95 - 2.0 * ln_ratio;
    (disc >= 0.0).then(|| Z95 - disc.sqrt())
}

/// Latency components and contention/jitter parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub network_ms: f64,
    pub processing_ms: f64,
    pub data_ms: f64,
    pub jitter_enabled: bool,
    pub jitter_sigma: f64,
    /// Utilization at which the contention multiplier stops growing; beyond
    /// it delay accrues as explicit queue wait.
    pub rho_cap: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            network_ms: 15.0,
            processing_ms: 45.0,
            data_ms: 25.0,
            jitter_enabled: true,
            jitter_sigma: calibrate_jitter_sigma(85.0, 120.0).expect("feasible calibration"),
            rho_cap: 0.95,
        }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), String> {
        if self.network_ms < 0.0 || self.processing_ms < 0.0 || self.data_ms < 0.0 {
            return Err("latency components must be >= 0".into());
        }
        if !(self.jitter_sigma >= 0.0) || !(0.0..1.0).contains(&self.rho_cap) {
            return Err("jitter_sigma must be >= 0 and rho_cap in [0,1)".into());
        }
        Ok(())
    }

    pub fn uncontended_ms(&self) -> f64 {
        self.network_ms + self.processing_ms + self.data_ms
    }

    /// Deterministic part of a request's service time: processing scaled by
    /// `1/(1-ρ)`, the data component scaled by the cache miss rate.
    #[inline]
    pub fn base_latency(&self, rho: f64, hit_rate: f64) -> f64 {
        let rho = rho.clamp(0.0, self.rho_cap);
        let hit = hit_rate.clamp(0.0, 1.0);
        self.network_ms + self.processing_ms / (1.0 - rho) + self.data_ms * (1.0 - hit)
    }

    /// Mean-one lognormal multiplier, or exactly 1 when jitter is off.
    #[inline]
    pub fn jitter<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if !self.jitter_enabled || self.jitter_sigma == 0.0 {
            return 1.0;
        }
        let z: f64 = StandardNormal.sample(rng);
        let s = self.jitter_sigma;
        (s * z - 0.5 * s * s).exp()
    }

    #[inline]
    pub fn service_latency(&self, rho: f64, hit_rate: f64, jitter: f64) -> f64 {
        self.base_latency(rho, hit_rate) * jitter
    }
}
