use serde::{Deserialize, Serialize};

use super::{MarketTick, SessionClock, WorkloadError};

pub const FEATURE_COUNT: usize = 18;

/// Fixed feature layout: eight volume statistics, six calendar features and
/// four market indicators.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "volume_mean",
    "volume_std",
    "volume_min",
    "volume_max",
    "volume_last",
    "volume_slope",
    "volume_lag1",
    "volume_lag5",
    "tod_sin",
    "tod_cos",
    "is_week_start",
    "is_week_end",
    "minutes_since_open",
    "minutes_to_close",
    "volatility_mean",
    "order_cancel_ratio_mean",
    "burst_flag_count",
    "busiest_util",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.0
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.0[i])
    }
}

/// Least-squares slope of `ys` against 0..n.
fn ols_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = ys.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &y) in ys.iter().enumerate() {
        let dx = i as f64 - x_mean;
        num += dx * (y - y_mean);
        den += dx * dx;
    }
    num / den
}

/// Raw (unscaled) features over the last `window` ticks of `history`.
pub fn extract_features(
    history: &[MarketTick],
    window: usize,
    clock: &SessionClock,
) -> Result<FeatureVector, WorkloadError> {
    let needed = window.max(6);
    if history.len() < needed || window == 0 {
        return Err(WorkloadError::WarmUp { needed, have: history.len() });
    }
    let n = history.len();
    let win = &history[n - window..];
    let vols: Vec<f64> = win.iter().map(|m| m.volume).collect();
    let w = window as f64;
    let mean = vols.iter().sum::<f64>() / w;
    let var = vols.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w;
    let min = vols.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vols.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let last = &history[n - 1];

    let tod = last.time_of_day_s;
    let angle = 2.0 * std::f64::consts::PI * tod / 86_400.0;
    let dow = last.day % 7;

    let mut f = [0.0; FEATURE_COUNT];
    f[0] = mean;
    f[1] = var.sqrt();
    f[2] = min;
    f[3] = max;
    f[4] = last.volume;
    f[5] = ols_slope(&vols);
    f[6] = history[n - 2].volume;
    f[7] = history[n - 6].volume;
    f[8] = angle.sin();
    f[9] = angle.cos();
    f[10] = if dow == 0 { 1.0 } else { 0.0 };
    f[11] = if dow == 4 { 1.0 } else { 0.0 };
    f[12] = (tod - clock.open_s) / 60.0;
    f[13] = (clock.close_s - tod) / 60.0;
    f[14] = win.iter().map(|m| m.volatility).sum::<f64>() / w;
    f[15] = win.iter().map(|m| m.order_cancel_ratio).sum::<f64>() / w;
    f[16] = win.iter().filter(|m| m.burst_active).count() as f64;
    f[17] = last.busiest_util;
    if f.iter().any(|v| !v.is_finite()) {
        return Err(WorkloadError::InvalidScenario("non-finite market data in history".into()));
    }
    Ok(FeatureVector(f))
}

/// Per-feature affine normalization `(x - offset) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureScaler {
    pub fn identity() -> Self {
        Self { offset: vec![0.0; FEATURE_COUNT], scale: vec![1.0; FEATURE_COUNT] }
    }

    /// Z-score parameters fitted on `samples`; constant features keep scale 1.
    pub fn fit(samples: &[FeatureVector]) -> Self {
        if samples.is_empty() {
            return Self::identity();
        }
        let n = samples.len() as f64;
        let mut offset = vec![0.0; FEATURE_COUNT];
        let mut scale = vec![1.0; FEATURE_COUNT];
        for j in 0..FEATURE_COUNT {
            let m = samples.iter().map(|s| s.0[j]).sum::<f64>() / n;
            let v = samples.iter().map(|s| (s.0[j] - m).powi(2)).sum::<f64>() / n;
            offset[j] = m;
            if v.sqrt() > 1e-12 {
                scale[j] = v.sqrt();
            }
        }
        Self { offset, scale }
    }

    pub fn transform(&self, f: &FeatureVector) -> FeatureVector {
        let mut out = [0.0; FEATURE_COUNT];
        for j in 0..FEATURE_COUNT {
            out[j] = (f.0[j] - self.offset[j]) / self.scale[j];
        }
        FeatureVector(out)
    }
}

/// Window length, clock and stored scaling bundled together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub window: usize,
    pub clock: SessionClock,
    pub scaler: FeatureScaler,
}

impl FeatureExtractor {
    pub fn new(window: usize, clock: SessionClock) -> Self {
        Self { window, clock, scaler: FeatureScaler::identity() }
    }

    pub fn extract(&self, history: &[MarketTick]) -> Result<FeatureVector, WorkloadError> {
        extract_features(history, self.window, &self.clock).map(|f| self.scaler.transform(&f))
    }

    pub fn extract_raw(&self, history: &[MarketTick]) -> Result<FeatureVector, WorkloadError> {
        extract_features(history, self.window, &self.clock)
    }
}
