//! Trading request streams: market-open ramps, tidal multipliers, injected
//! bursts and Poisson arrivals, plus the 18-wide feature windows consumed by
//! the load predictor.

mod features;
mod scenario;

pub use features::{
    extract_features, FeatureExtractor, FeatureScaler, FeatureVector, FEATURE_COUNT,
    FEATURE_NAMES,
};
pub use scenario::{
    default_service_mix, BurstSpec, MarketTick, Ramp, Request, ServiceMix, SessionClock,
    TidalPoint, WorkloadGenerator, WorkloadScenario,
};

use thiserror::Error;

pub type Tick = u64;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("tick {t} outside scenario horizon {horizon}")]
    OutOfHorizon { t: Tick, horizon: Tick },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("warm-up needed: feature window requires {needed} ticks of history, have {have}")]
    WarmUp { needed: usize, have: usize },
    #[error("scenario io: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario json: {0}")]
    Json(#[from] serde_json::Error),
}
