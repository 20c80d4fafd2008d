//! Stacked LSTM regressor with batched backpropagation through time, its
//! training loop, and the load predictor built on top of it.

mod cell;
mod model;
mod predictor;
mod train;

pub use cell::{cell_forward, CellState};
pub use model::{Lstm, LstmCache, LstmConfig};
pub use predictor::{
    accuracy, build_dataset, read_dataset_csv, split_series, write_dataset_csv, Accuracy, Forecast,
    LoadPredictor, PredictorConfig, PredictorReport, Sample,
};
pub use train::{clip_global_norm, train, write_loss_curve_csv, EpochLoss, SequenceDataset, TrainReport, TrainSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LstmError {
    #[error("input width {found}, expected {expected}")]
    Width { expected: usize, found: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite activation in layer {layer}")]
    NonFinite { layer: usize },
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("history too short: need {needed} ticks, have {have}")]
    WarmUp { needed: usize, have: usize },
    #[error("invalid: {0}")]
    Invalid(String),
    #[error(transparent)]
    Workload(#[from] crate::workload::WorkloadError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
