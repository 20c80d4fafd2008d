//! Flat parameter storage, dense layers with analytic gradients, the Adam
//! optimizer and tensor checkpoints shared by the policy and predictor
//! networks.

mod adam;
mod checkpoint;
mod dense;
mod params;

pub use adam::{adam_step, Adam, AdamConfig};
pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_VERSION};
pub use dense::{Activation, Linear, Mlp, MlpCache};
pub use params::{ParamBuffer, TensorSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("unknown tensor {0}")]
    UnknownTensor(String),
    #[error("tensor {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("checkpoint version {0} not supported")]
    Version(u32),
    #[error("checkpoint kind {found}, expected {expected}")]
    Kind { expected: String, found: String },
    #[error("non-finite value in tensor {0}")]
    NonFinite(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
