use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tradesim_core::cluster::Topology;
use tradesim_core::drl::{ClusterEnvConfig, TrainConfig};
use tradesim_core::experiment::{
    calibration_topology, market_open_scenario, market_open_topology, scaling_topology, tidal_burst_day, RunConfig,
};
use tradesim_core::lstm::PredictorConfig;
use tradesim_core::workload::WorkloadScenario;

use crate::Failure;

pub const SCENARIO_PRESETS: [&str; 3] = ["market-open", "tidal-burst", "flat"];
pub const TOPOLOGY_PRESETS: [&str; 4] = ["market-open", "scaling", "calibration", "uniform"];

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

/// A preset name, or a path to a scenario JSON file. The scenario seed is
/// replaced by `seed`.
pub fn resolve_scenario(spec: &str, seed: u64) -> Result<WorkloadScenario, Failure> {
    let mut sc = match spec {
        "market-open" => market_open_scenario(seed),
        "tidal-burst" => tidal_burst_day(seed, 0, 3.0),
        "flat" => WorkloadScenario::flat(5_000.0, 600, seed),
        path => {
            let p = Path::new(path);
            if !p.exists() {
                return Err(Failure::config(format!(
                    "scenario: {path} is neither a file nor one of {}",
                    SCENARIO_PRESETS.join(", ")
                )));
            }
            let text = std::fs::read_to_string(p).map_err(|e| Failure::config(format!("{path}: {e}")))?;
            WorkloadScenario::from_json(&text).map_err(|e| Failure::config(format!("{path}: {e}")))?
        }
    };
    sc.seed = seed;
    sc.validate().map_err(|e| Failure::config(format!("scenario {spec}: {e}")))?;
    Ok(sc)
}

pub fn resolve_topology(spec: &str) -> Result<Topology, Failure> {
    let t = match spec {
        "market-open" => market_open_topology(),
        "scaling" => scaling_topology().map_err(|e| Failure::config(format!("topology {spec}: {e}")))?,
        "calibration" => calibration_topology().map_err(|e| Failure::config(format!("topology {spec}: {e}")))?,
        "uniform" => Topology::uniform(8, 10_000.0, 2, 0.9),
        path => {
            let p = Path::new(path);
            if !p.exists() {
                return Err(Failure::config(format!(
                    "topology: {path} is neither a file nor one of {}",
                    TOPOLOGY_PRESETS.join(", ")
                )));
            }
            Topology::load(p).map_err(|e| Failure::config(format!("{path}: {e}")))?
        }
    };
    t.validate().map_err(|e| Failure::config(format!("topology {spec}: {e}")))?;
    Ok(t)
}

pub fn require_file(field: &str, path: &Option<PathBuf>) -> Result<(), Failure> {
    match path {
        Some(p) if !p.is_file() => Err(Failure::config(format!("{field}: {} does not exist", p.display()))),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    pub scenario: String,
    pub seed: u64,
    /// Consecutive trading days; only the tidal-burst preset spans days.
    pub days: u32,
    /// Also write one row per request.
    pub requests: bool,
    pub out: PathBuf,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self { scenario: "flat".into(), seed: 0, days: 1, requests: true, out: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub scenario: String,
    pub topology: String,
    /// JSON file with run settings; replaces `run` when present.
    pub scheduler_config: Option<PathBuf>,
    /// Predictor checkpoint; enables proactive scaling.
    pub predictor: Option<PathBuf>,
    /// Policy checkpoint for the drl scheduler.
    pub policy: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub strict_deterministic: bool,
    pub run: RunConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            scenario: "market-open".into(),
            topology: "market-open".into(),
            scheduler_config: None,
            predictor: None,
            policy: None,
            seeds: vec![0],
            out: "out".into(),
            strict_deterministic: false,
            run: RunConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainPredictorConfig {
    pub datasets: Vec<PathBuf>,
    pub predictor: PredictorConfig,
    pub out: PathBuf,
}

impl Default for TrainPredictorConfig {
    fn default() -> Self {
        let mut predictor = PredictorConfig::default();
        predictor.sample_every = 5;
        predictor.train.epochs = 8;
        Self { datasets: Vec::new(), predictor, out: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainDrlConfig {
    pub scenario: String,
    pub topology: String,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub env: ClusterEnvConfig,
    pub train: TrainConfig,
    pub out: PathBuf,
}

impl Default for TrainDrlConfig {
    fn default() -> Self {
        Self {
            scenario: "market-open".into(),
            topology: "market-open".into(),
            seed: 0,
            hidden: vec![64, 64],
            env: ClusterEnvConfig::default(),
            train: TrainConfig { episodes: 20, ..TrainConfig::default() },
            out: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub baseline: PathBuf,
    pub candidate: PathBuf,
    pub out: PathBuf,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { baseline: "baseline.json".into(), candidate: "candidate.json".into(), out: "out".into() }
    }
}
