use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Lstm, LstmError};
use crate::nn::{Adam, AdamConfig};
use crate::rng::{rng_for, stream};
use crate::scalar::{l2_norm, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: f64,
    /// Trailing share of samples (in time order) held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 32,
            epochs: 30,
            clip_norm: 5.0,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Fixed-length sequences with scalar targets, stored in time order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SequenceDataset {
    pub seq_len: usize,
    pub input: usize,
    /// `[sample][t][input]`.
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl SequenceDataset {
    pub fn new(seq_len: usize, input: usize) -> Self {
        Self { seq_len, input, xs: Vec::new(), ys: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn push(&mut self, seq: &[f64], y: f64) {
        assert_eq!(seq.len(), self.seq_len * self.input, "sequence shape");
        self.xs.extend_from_slice(seq);
        self.ys.push(y);
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let w = self.seq_len * self.input;
        &self.xs[i * w..(i + 1) * w]
    }

    /// Time-major batch `[t][b][input]` for the given sample indices.
    pub fn batch<T: Scalar>(&self, idx: &[usize]) -> (Vec<T>, Vec<T>) {
        let (l, f, b) = (self.seq_len, self.input, idx.len());
        let mut x = vec![T::zero(); l * b * f];
        for (bi, &s) in idx.iter().enumerate() {
            let src = self.sample(s);
            for t in 0..l {
                for j in 0..f {
                    x[(t * b + bi) * f + j] = T::lit(src[t * f + j]);
                }
            }
        }
        (x, idx.iter().map(|&s| T::lit(self.ys[s])).collect())
    }

    /// Index of the first validation sample.
    pub fn split_point(&self, validation_fraction: f64) -> usize {
        let n = self.len();
        let v = ((n as f64) * validation_fraction).round() as usize;
        n - v.min(n.saturating_sub(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub curve: Vec<EpochLoss>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

/// Scales `g` so its Euclidean norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm<T: Scalar>(g: &mut [T], max_norm: f64) -> f64 {
    let n = l2_norm(g).as_f64();
    if n > max_norm && n > 0.0 {
        let s = T::lit(max_norm / n);
        g.iter_mut().for_each(|x| *x *= s);
    }
    n
}

fn mse<T: Scalar>(model: &Lstm<T>, data: &SequenceDataset, idx: &[usize], batch: usize) -> Result<f64, LstmError> {
    if idx.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for chunk in idx.chunks(batch.max(1)) {
        let (x, y) = data.batch::<T>(chunk);
        let cache = model.forward::<crate::rng::SimRng>(&x, data.seq_len, chunk.len(), None)?;
        total += cache.outputs.iter().zip(&y).map(|(&o, &t)| (o - t).as_f64().powi(2)).sum::<f64>();
    }
    Ok(total / idx.len() as f64)
}

/// Minibatch Adam training on the leading part of `data`, validating on the
/// trailing part. Leaves the best-validation parameters in `model`.
pub fn train<T: Scalar>(model: &mut Lstm<T>, data: &SequenceDataset, spec: &TrainSpec) -> Result<TrainReport, LstmError> {
    if data.input != model.config.input {
        return Err(LstmError::Width { expected: model.config.input, found: data.input });
    }
    if data.is_empty() || spec.batch_size == 0 {
        return Err(LstmError::EmptyBatch);
    }
    let split = data.split_point(spec.validation_fraction);
    let mut train_idx: Vec<usize> = (0..split).collect();
    let val_idx: Vec<usize> = (split..data.len()).collect();
    let mut shuffle_rng = rng_for(spec.seed, stream::TRAIN, 0);
    let mut adam = Adam::new(model.params.len(), spec.adam);
    let mut best = model.params.data.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut curve = Vec::with_capacity(spec.epochs);
    for epoch in 0..spec.epochs {
        train_idx.shuffle(&mut shuffle_rng);
        let mut drop_rng = rng_for(spec.seed, stream::DROPOUT, epoch as u64);
        let mut sum = 0.0;
        for chunk in train_idx.chunks(spec.batch_size) {
            let (x, y) = data.batch::<T>(chunk);
            let (loss, mut g) = model.loss_and_gradients(&x, data.seq_len, &y, Some(&mut drop_rng))?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(LstmError::Divergence { epoch, loss });
            }
            sum += loss * chunk.len() as f64;
            clip_global_norm(&mut g, spec.clip_norm);
            adam.step(&mut model.params.data, &g);
        }
        let train_mse = sum / train_idx.len() as f64;
        let val_mse = mse(model, data, &val_idx, 256)?;
        if !model.params.all_finite() {
            return Err(LstmError::Divergence { epoch, loss: train_mse });
        }
        let score = if val_idx.is_empty() { train_mse } else { val_mse };
        if score < best_val {
            best_val = score;
            best_epoch = epoch;
            best.clone_from(&model.params.data);
        }
        curve.push(EpochLoss { epoch, train_mse, val_mse });
    }
    if spec.epochs > 0 {
        model.params.data = best;
    }
    Ok(TrainReport { curve, best_epoch, best_val_mse: best_val })
}

pub fn write_loss_curve_csv<W: std::io::Write>(curve: &[EpochLoss], out: W) -> Result<(), LstmError> {
    let mut w = csv::Writer::from_writer(out);
    for e in curve {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}
