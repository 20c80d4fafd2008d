//! Genetic search over placements with adaptive rates, elitism, Pareto
//! pre-filtering, local search and policy-driven refinement of the elite.

mod chromosome;
mod fitness;
mod ga;
mod operators;
mod refine;

pub use chromosome::{Chromosome, GeneSpace};
pub use fitness::{
    balance_degree, fitness, EvalConfig, Evaluation, Evaluator, FitnessWeights, FnEvaluator, Objectives, SimEvaluator,
};
pub use ga::{hybrid_scheduling, write_generation_csv, GenerationStats, HybridConfig, HybridResult};
pub use operators::{
    adapt_population_size, adaptive_rates, crossover, dominates, local_search, mutate, neighbors, non_dominated_sort,
    select_top_k, tournament_select,
};
pub use refine::{apply_policy_delta, RefineConfig, RefineReward, RefineStats, Refiner};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HybridError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Drl(#[from] crate::drl::DrlError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
