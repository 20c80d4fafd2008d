mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tradesim_core::drl::DrlError;
use tradesim_core::experiment::{ExperimentError, SchedulerKind};
use tradesim_core::lstm::LstmError;

/// Reproducible experiments on the simulated trading cluster.
#[derive(Parser)]
#[command(name = "tradesim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the arrival trace and market dataset of a scenario.
    Generate(GenerateArgs),
    /// Run a scenario under a scheduler and write trace, decisions and summary.
    Simulate(SimulateArgs),
    /// Fit the load predictor on market dataset CSVs.
    TrainPredictor(TrainPredictorArgs),
    /// Train the scheduling policy on a simulated cluster.
    TrainDrl(TrainDrlArgs),
    /// Compare two run summaries metric by metric.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario file or preset (market-open, tidal-burst, flat).
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    days: Option<u32>,
    /// Skip the per-request CSV.
    #[arg(long)]
    no_requests: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// Topology file or preset (market-open, scaling, calibration, uniform).
    #[arg(long)]
    topology: Option<String>,
    #[arg(long)]
    scheduler: Option<SchedulerKind>,
    /// Run settings JSON (decision interval, thresholds, GA parameters, ...).
    #[arg(long)]
    scheduler_config: Option<PathBuf>,
    /// Predictor checkpoint enabling proactive scaling.
    #[arg(long)]
    predictor: Option<PathBuf>,
    /// Policy checkpoint for the drl scheduler.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Repeat for several seeds.
    #[arg(long)]
    seed: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Single-threaded, bit-reproducible execution.
    #[arg(long)]
    strict_deterministic: bool,
}

#[derive(Args)]
struct TrainPredictorArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Market dataset CSV; repeat for several files.
    #[arg(long)]
    dataset: Vec<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainDrlArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    topology: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Baseline summary JSON.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Candidate summary JSON.
    #[arg(long)]
    candidate: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error with its exit-code class.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
    Divergence(String),
}

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn runtime(msg: impl std::fmt::Display) -> Self {
        Self::Runtime(msg.to_string())
    }

    fn code(&self) -> u8 {
        match self {
            Self::Config(_) => 1,
            Self::Runtime(_) => 2,
            Self::Divergence(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Runtime(m) => write!(f, "runtime error: {m}"),
            Self::Divergence(m) => write!(f, "training diverged: {m}"),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::runtime(e)
    }
}

impl From<LstmError> for Failure {
    fn from(e: LstmError) -> Self {
        match e {
            LstmError::Divergence { .. } => Self::Divergence(e.to_string()),
            LstmError::Invalid(_) | LstmError::Width { .. } => Self::Config(e.to_string()),
            e => Self::runtime(e),
        }
    }
}

impl From<DrlError> for Failure {
    fn from(e: DrlError) -> Self {
        match e {
            DrlError::Divergence { .. } => Self::Divergence(e.to_string()),
            DrlError::Invalid(_) | DrlError::Dimension { .. } => Self::Config(e.to_string()),
            e => Self::runtime(e),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(m) => Self::Config(m),
            ExperimentError::Predictor(e) => e.into(),
            ExperimentError::Drl(e) => e.into(),
            e => Self::runtime(e),
        }
    }
}

fn base<T: Default + serde::de::DeserializeOwned>(path: &Option<PathBuf>) -> Result<T, Failure> {
    match path {
        Some(p) => config::read_json(p),
        None => Ok(T::default()),
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate(a) => {
            let mut c: config::GenerateConfig = base(&a.config)?;
            if let Some(s) = a.scenario {
                c.scenario = s;
            }
            if let Some(s) = a.seed {
                c.seed = s;
            }
            if let Some(d) = a.days {
                c.days = d;
            }
            if a.no_requests {
                c.requests = false;
            }
            if let Some(o) = a.out {
                c.out = o;
            }
            commands::generate(c)
        }
        Command::Simulate(a) => {
            let mut c: config::SimulateConfig = base(&a.config)?;
            if let Some(s) = a.scheduler_config {
                c.scheduler_config = Some(s);
            }
            if let Some(p) = c.scheduler_config.take() {
                c.run = config::read_json(&p)?;
            }
            if let Some(s) = a.scenario {
                c.scenario = s;
            }
            if let Some(t) = a.topology {
                c.topology = t;
            }
            if let Some(k) = a.scheduler {
                c.run.scheduler = k;
            }
            if a.predictor.is_some() {
                c.predictor = a.predictor;
            }
            if a.policy.is_some() {
                c.policy = a.policy;
            }
            if !a.seed.is_empty() {
                c.seeds = a.seed;
            }
            if let Some(o) = a.out {
                c.out = o;
            }
            c.strict_deterministic |= a.strict_deterministic;
            commands::simulate(c)
        }
        Command::TrainPredictor(a) => {
            let mut c: config::TrainPredictorConfig = base(&a.config)?;
            if !a.dataset.is_empty() {
                c.datasets = a.dataset;
            }
            if let Some(e) = a.epochs {
                c.predictor.train.epochs = e;
            }
            if let Some(s) = a.seed {
                c.predictor.train.seed = s;
            }
            if let Some(o) = a.out {
                c.out = o;
            }
            commands::train_predictor(c)
        }
        Command::TrainDrl(a) => {
            let mut c: config::TrainDrlConfig = base(&a.config)?;
            if let Some(s) = a.scenario {
                c.scenario = s;
            }
            if let Some(t) = a.topology {
                c.topology = t;
            }
            if let Some(e) = a.episodes {
                c.train.episodes = e;
            }
            if let Some(s) = a.seed {
                c.seed = s;
            }
            if let Some(o) = a.out {
                c.out = o;
            }
            commands::train_drl(c)
        }
        Command::Compare(a) => {
            let mut c: config::CompareConfig = base(&a.config)?;
            if let Some(b) = a.baseline {
                c.baseline = b;
            }
            if let Some(x) = a.candidate {
                c.candidate = x;
            }
            if let Some(o) = a.out {
                c.out = o;
            }
            commands::compare(c)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}
