use std::io::Write;

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Outcome of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario_id: String,
    pub scheduler: String,
    pub seed: u64,
    pub ticks: u64,
    pub generated: u64,
    pub completed: u64,
    pub latency_mean_ms: f64,
    pub latency_std_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub cpu_util_mean: f64,
    pub mem_util_mean: f64,
    pub net_util_mean: f64,
    pub achieved_tps: f64,
    pub sanitized_actions: u64,
    pub cache_hit_rate: f64,
    /// False when the cache saw no lookups and the rate is a placeholder.
    pub cache_hit_rate_defined: bool,
    /// Weighted cost of the run's latency, utilization and balance, lower is better.
    pub fitness: f64,
    /// Sum over ticks of queued requests.
    pub backlog_integral: f64,
    pub first_scale_up_tick: Option<u64>,
}

impl RunSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MetricsError> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    LowerIsBetter,
    HigherIsBetter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub baseline: f64,
    pub candidate: f64,
    /// Relative improvement in percent; absent when the baseline is zero and
    /// the candidate differs.
    pub improvement_pct: Option<f64>,
    pub direction: Direction,
}

fn improvement(baseline: f64, candidate: f64, dir: Direction) -> Option<f64> {
    if baseline == candidate {
        return Some(0.0);
    }
    if baseline == 0.0 {
        return None;
    }
    let rel = (candidate - baseline) / baseline.abs() * 100.0;
    Some(match dir {
        Direction::LowerIsBetter => -rel,
        Direction::HigherIsBetter => rel,
    })
}

/// Per-metric relative improvement of `candidate` over `baseline`.
pub fn compare_runs(baseline: &RunSummary, candidate: &RunSummary) -> Result<Vec<MetricDelta>, MetricsError> {
    if baseline.scenario_id != candidate.scenario_id {
        return Err(MetricsError::ScenarioMismatch {
            baseline: baseline.scenario_id.clone(),
            candidate: candidate.scenario_id.clone(),
        });
    }
    use Direction::*;
    let rows: [(&str, f64, f64, Direction); 10] = [
        ("latency_mean_ms", baseline.latency_mean_ms, candidate.latency_mean_ms, LowerIsBetter),
        ("p50_ms", baseline.p50_ms, candidate.p50_ms, LowerIsBetter),
        ("p95_ms", baseline.p95_ms, candidate.p95_ms, LowerIsBetter),
        ("p99_ms", baseline.p99_ms, candidate.p99_ms, LowerIsBetter),
        ("achieved_tps", baseline.achieved_tps, candidate.achieved_tps, HigherIsBetter),
        ("cpu_util_mean", baseline.cpu_util_mean, candidate.cpu_util_mean, HigherIsBetter),
        ("cache_hit_rate", baseline.cache_hit_rate, candidate.cache_hit_rate, HigherIsBetter),
        ("fitness", baseline.fitness, candidate.fitness, LowerIsBetter),
        ("backlog_integral", baseline.backlog_integral, candidate.backlog_integral, LowerIsBetter),
        ("sanitized_actions", baseline.sanitized_actions as f64, candidate.sanitized_actions as f64, LowerIsBetter),
    ];
    Ok(rows
        .into_iter()
        .map(|(m, b, c, d)| MetricDelta {
            metric: m.to_string(),
            baseline: b,
            candidate: c,
            improvement_pct: improvement(b, c, d),
            direction: d,
        })
        .collect())
}

pub fn write_comparison_csv<W: Write>(rows: &[MetricDelta], out: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
