//! Seedable simulator of a microservice trading cluster with hybrid
//! genetic/reinforcement-learning scheduling, a three-tier cache and an
//! LSTM load predictor.

pub mod cache;
pub mod cluster;
pub mod drl;
pub mod experiment;
pub mod hybrid;
pub mod lstm;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod workload;

pub type LoadPredictor32 = lstm::LoadPredictor<f32>;
pub type LoadPredictor64 = lstm::LoadPredictor<f64>;
pub type PolicyNet32 = drl::PolicyNet<f32>;
pub type PolicyNet64 = drl::PolicyNet<f64>;
pub type Lstm32 = lstm::Lstm<f32>;
pub type Lstm64 = lstm::Lstm<f64>;
