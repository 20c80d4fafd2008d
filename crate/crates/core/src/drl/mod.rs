//! Learned scheduler: a shared-trunk network with a policy head and a
//! dueling critic, trained with the clipped probability-ratio objective.

mod env;
mod policy;
mod ppo;
mod train;

pub use env::{
    decode_action, encode_state, migration_shortlist, scheduling_layout, ClusterEnv, ClusterEnvConfig,
    ContextualBandit, Env, EnvStep, StateEncoding,
};
pub use policy::{dueling_combine, log_softmax, ActMode, ActionLayout, PolicyAction, PolicyConfig, PolicyEval, PolicyNet};
pub use ppo::{
    clipped_objective, compute_returns_and_advantages, ppo_loss, LossConfig, PpoBatch, PpoLoss, Trajectory, Transition,
};
pub use train::{collect_episode, train_scheduler, write_curve_csv, CurvePoint, TrainConfig};

use thiserror::Error;

use crate::nn::Checkpoint;

#[derive(Debug, Error)]
pub enum DrlError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("training diverged at episode {episode}: loss {loss}")]
    Divergence { episode: usize, loss: f64, snapshot: Box<Checkpoint> },
    #[error("invalid: {0}")]
    Invalid(String),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
