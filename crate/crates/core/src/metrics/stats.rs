use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::MetricsError;

/// Nearest-rank percentile of an ascending slice: the element at rank
/// `ceil(level·n)`, clamped to `[1, n]`.
pub fn percentile_sorted(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let rank = ((level * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

pub fn percentiles(samples: &[f64], levels: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(&l) = levels.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
        return Err(MetricsError::InvalidLevel(l));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(levels.iter().map(|&l| percentile_sorted(&sorted, l)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: u64,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

impl LatencyStats {
    /// Sorts `samples` in place.
    pub fn from_samples(samples: &mut [f64]) -> Result<Self, MetricsError> {
        if samples.is_empty() {
            return Err(MetricsError::Empty);
        }
        samples.sort_unstable_by(f64::total_cmp);
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            count: samples.len() as u64,
            mean,
            std: var.sqrt(),
            min: samples[0],
            p50: percentile_sorted(samples, 0.50),
            p95: percentile_sorted(samples, 0.95),
            p99: percentile_sorted(samples, 0.99),
            max: samples[samples.len() - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalFit {
    pub mu: f64,
    pub sigma: f64,
    pub n: u64,
    /// Kolmogorov–Smirnov distance between the sample and the fitted law.
    pub ks_statistic: f64,
    /// Asymptotic 5% critical value for `n` samples.
    pub ks_critical: f64,
}

impl LognormalFit {
    pub fn accepted(&self) -> bool {
        self.ks_statistic < self.ks_critical
    }

    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }
}

pub fn ks_critical_value(n: usize) -> f64 {
    1.358 / (n as f64).sqrt()
}

/// `sup |F_n(x) - F(x)|` over an ascending sample.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Maximum-likelihood lognormal fit on log-samples.
pub fn fit_lognormal(samples: &[f64]) -> Result<LognormalFit, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(&x) = samples.iter().find(|&&x| !(x > 0.0)) {
        return Err(MetricsError::NonPositive(x));
    }
    let mut logs: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
    let n = logs.len() as f64;
    let shift = logs[0];
    let mu = shift + logs.iter().map(|l| l - shift).sum::<f64>() / n;
    let sigma = (logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / n).sqrt();
    logs.sort_unstable_by(f64::total_cmp);
    // The lognormal CDF at x equals the normal CDF of ln x, so the test runs on logs.
    let ks = if sigma > 0.0 {
        let d = Normal::new(mu, sigma).expect("positive sigma");
        ks_statistic(&logs, |l| d.cdf(l))
    } else {
        // All samples equal: the empirical and fitted laws are the same point mass.
        0.0
    };
    Ok(LognormalFit { mu, sigma, n: logs.len() as u64, ks_statistic: ks, ks_critical: ks_critical_value(logs.len()) })
}
