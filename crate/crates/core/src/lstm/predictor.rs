use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{train, Lstm, LstmConfig, LstmError, SequenceDataset, TrainReport, TrainSpec};
use crate::metrics::percentile_sorted;
use crate::nn::Checkpoint;
use crate::rng::{rng_for, stream};
use crate::scalar::Scalar;
use crate::workload::{extract_features, FeatureScaler, FeatureVector, MarketTick, SessionClock, FEATURE_COUNT};

const CHECKPOINT_KIND: &str = "lstm-load-predictor";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    /// Ticks summarized by each feature vector.
    pub window: usize,
    /// Feature vectors per input sequence.
    pub seq_len: usize,
    /// Ticks between consecutive feature vectors of a sequence.
    pub stride: usize,
    /// The target is the mean volume over this many ticks ahead.
    pub horizon: usize,
    /// Burst flag fires when the forecast exceeds this multiple of the
    /// recent mean volume.
    pub burst_threshold: f64,
    /// Nominal coverage of the forecast band.
    pub band_level: f64,
    pub accuracy_tolerance: f64,
    /// Ticks between training samples within a series.
    pub sample_every: usize,
    pub clock: SessionClock,
    pub lstm: LstmConfig,
    pub train: TrainSpec,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            window: 60,
            seq_len: 8,
            stride: 10,
            horizon: 60,
            burst_threshold: 2.0,
            band_level: 0.9,
            accuracy_tolerance: 0.10,
            sample_every: 1,
            clock: SessionClock::default(),
            lstm: LstmConfig::default(),
            train: TrainSpec::default(),
        }
    }
}

impl PredictorConfig {
    /// Ticks of history needed for one forecast.
    pub fn warm_up(&self) -> usize {
        self.window.max(6) + (self.seq_len - 1) * self.stride
    }

    pub fn validate(&self) -> Result<(), LstmError> {
        if self.seq_len == 0 || self.stride == 0 || self.horizon == 0 || self.window == 0 || self.sample_every == 0 {
            return Err(LstmError::Invalid("window, seq_len, stride, horizon and sample_every must be > 0".into()));
        }
        if self.lstm.input != FEATURE_COUNT {
            return Err(LstmError::Width { expected: FEATURE_COUNT, found: self.lstm.input });
        }
        if !(0.0..1.0).contains(&self.lstm.dropout) || !(self.band_level > 0.0 && self.band_level < 1.0) {
            return Err(LstmError::Invalid("dropout must be in [0,1) and band_level in (0,1)".into()));
        }
        Ok(())
    }
}

/// One training example: raw feature sequence, future mean volume, and the
/// mean volume over the trailing window.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<FeatureVector>,
    pub target: f64,
    pub baseline: f64,
}

/// Splits rows into runs of consecutive ticks.
pub fn split_series(rows: &[MarketTick]) -> Vec<Vec<MarketTick>> {
    let mut out: Vec<Vec<MarketTick>> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some(cur) if cur.last().is_some_and(|p| p.tick + 1 == r.tick) => cur.push(r.clone()),
            _ => out.push(vec![r.clone()]),
        }
    }
    out
}

fn trailing_mean(series: &[MarketTick], end: usize, window: usize) -> f64 {
    let s = &series[end + 1 - window..=end];
    s.iter().map(|m| m.volume).sum::<f64>() / window as f64
}

/// Samples from every series, in series order then tick order.
pub fn build_dataset(series: &[Vec<MarketTick>], cfg: &PredictorConfig) -> Result<Vec<Sample>, LstmError> {
    cfg.validate()?;
    let mut out = Vec::new();
    let first = cfg.warm_up() - 1;
    for s in series {
        if s.len() < cfg.warm_up() + cfg.horizon {
            continue;
        }
        let mut feats: Vec<Option<FeatureVector>> = vec![None; s.len()];
        for t in (first..s.len() - cfg.horizon).step_by(cfg.sample_every) {
            let mut seq = Vec::with_capacity(cfg.seq_len);
            for q in 0..cfg.seq_len {
                let pos = t - (cfg.seq_len - 1 - q) * cfg.stride;
                if feats[pos].is_none() {
                    feats[pos] = Some(extract_features(&s[..=pos], cfg.window, &cfg.clock)?);
                }
                seq.push(feats[pos].expect("filled above"));
            }
            let target = s[t + 1..=t + cfg.horizon].iter().map(|m| m.volume).sum::<f64>() / cfg.horizon as f64;
            out.push(Sample { features: seq, target, baseline: trailing_mean(s, t, cfg.window) });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    /// Expected mean volume per tick over the forecast horizon.
    pub predicted: f64,
    pub burst_flag: bool,
    pub low: f64,
    pub high: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub fraction: f64,
    pub counted: usize,
    /// Points skipped because the actual value was zero.
    pub excluded: usize,
}

/// Share of points whose relative error is within `tolerance`.
pub fn accuracy(predictions: &[f64], actuals: &[f64], tolerance: f64) -> Result<Accuracy, LstmError> {
    if predictions.len() != actuals.len() {
        return Err(LstmError::Invalid(format!("{} predictions vs {} actuals", predictions.len(), actuals.len())));
    }
    let (mut hit, mut counted, mut excluded) = (0usize, 0usize, 0usize);
    for (&p, &a) in predictions.iter().zip(actuals) {
        if a == 0.0 {
            excluded += 1;
            continue;
        }
        counted += 1;
        if ((p - a) / a).abs() <= tolerance {
            hit += 1;
        }
    }
    let fraction = if counted == 0 { 0.0 } else { hit as f64 / counted as f64 };
    Ok(Accuracy { fraction, counted, excluded })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorReport {
    pub train: TrainReport,
    pub train_samples: usize,
    pub validation_samples: usize,
    pub validation_accuracy: Accuracy,
    pub band_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PredictorMeta {
    config: PredictorConfig,
    scaler: FeatureScaler,
    target_offset: f64,
    target_scale: f64,
    band: (f64, f64),
}

/// LSTM forecaster of near-term volume with a burst early-warning flag.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadPredictor<T> {
    pub config: PredictorConfig,
    pub scaler: FeatureScaler,
    pub target_offset: f64,
    pub target_scale: f64,
    /// Relative residual quantiles `(low, high)` framing the forecast band.
    pub band: (f64, f64),
    pub model: Lstm<T>,
}

impl<T: Scalar> LoadPredictor<T> {
    fn encode(&self, seq: &[FeatureVector], out: &mut Vec<f64>) {
        for f in seq {
            out.extend_from_slice(&self.scaler.transform(f).0);
        }
    }

    fn dataset(&self, samples: &[Sample]) -> SequenceDataset {
        let mut d = SequenceDataset::new(self.config.seq_len, FEATURE_COUNT);
        let mut buf = Vec::with_capacity(self.config.seq_len * FEATURE_COUNT);
        for s in samples {
            buf.clear();
            self.encode(&s.features, &mut buf);
            d.push(&buf, (s.target - self.target_offset) / self.target_scale);
        }
        d
    }

    /// Fits scaling on the training part of `series`, trains the network and
    /// calibrates the band on the held-out tail.
    pub fn fit(series: &[Vec<MarketTick>], config: PredictorConfig) -> Result<(Self, PredictorReport), LstmError> {
        let samples = build_dataset(series, &config)?;
        if samples.len() < 2 {
            return Err(LstmError::Invalid("not enough history to build training samples".into()));
        }
        let probe = SequenceDataset { seq_len: 1, input: 1, xs: vec![0.0; samples.len()], ys: vec![0.0; samples.len()] };
        let split = probe.split_point(config.train.validation_fraction);
        let train_part = &samples[..split];
        let flat: Vec<FeatureVector> = train_part.iter().flat_map(|s| s.features.iter().copied()).collect();
        let scaler = FeatureScaler::fit(&flat);
        let ys: Vec<f64> = train_part.iter().map(|s| s.target).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let std = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64).sqrt();
        let mut model = Lstm::new(config.lstm.clone());
        model.init(&mut rng_for(config.train.seed, stream::TRAIN, u64::MAX));
        let mut p = Self {
            scaler,
            target_offset: mean,
            target_scale: if std > 1e-12 { std } else { 1.0 },
            band: (0.0, 0.0),
            model,
            config,
        };
        let data = p.dataset(&samples);
        let report = train(&mut p.model, &data, &p.config.train)?;

        let val = &samples[split..];
        let preds = p.predict_samples(val)?;
        let actual: Vec<f64> = val.iter().map(|s| s.target).collect();
        let mut rel: Vec<f64> =
            preds.iter().zip(&actual).filter(|(&pr, _)| pr.abs() > 1e-12).map(|(&pr, &a)| (a - pr) / pr.abs()).collect();
        rel.sort_unstable_by(f64::total_cmp);
        if !rel.is_empty() {
            let tail = (1.0 - p.config.band_level) / 2.0;
            p.band = (percentile_sorted(&rel, tail).min(0.0), percentile_sorted(&rel, 1.0 - tail).max(0.0));
        }
        let covered = preds
            .iter()
            .zip(&actual)
            .filter(|(&pr, &a)| {
                let (lo, hi) = p.band_for(pr);
                (lo..=hi).contains(&a)
            })
            .count();
        let validation_accuracy = accuracy(&preds, &actual, p.config.accuracy_tolerance)?;
        let rep = PredictorReport {
            train: report,
            train_samples: split,
            validation_samples: val.len(),
            validation_accuracy,
            band_coverage: if val.is_empty() { 0.0 } else { covered as f64 / val.len() as f64 },
        };
        Ok((p, rep))
    }

    fn band_for(&self, pred: f64) -> (f64, f64) {
        let a = pred.abs();
        (pred + self.band.0 * a, pred + self.band.1 * a)
    }

    /// Forecasts for prepared samples, in volume units.
    pub fn predict_samples(&self, samples: &[Sample]) -> Result<Vec<f64>, LstmError> {
        let data = self.dataset(samples);
        let mut out = Vec::with_capacity(samples.len());
        let idx: Vec<usize> = (0..samples.len()).collect();
        for chunk in idx.chunks(256) {
            let (x, _) = data.batch::<T>(chunk);
            let c = self.model.forward::<crate::rng::SimRng>(&x, data.seq_len, chunk.len(), None)?;
            out.extend(c.outputs.iter().map(|o| o.as_f64() * self.target_scale + self.target_offset));
        }
        Ok(out)
    }

    /// Forecast from the trailing history; the flag compares the forecast
    /// with the mean volume of the last `window` ticks.
    pub fn predict_and_warn(&self, history: &[MarketTick], burst_threshold: f64) -> Result<Forecast, LstmError> {
        let cfg = &self.config;
        let needed = cfg.warm_up();
        if history.len() < needed {
            return Err(LstmError::WarmUp { needed, have: history.len() });
        }
        let t = history.len() - 1;
        let mut seq = Vec::with_capacity(cfg.seq_len);
        for q in 0..cfg.seq_len {
            let pos = t - (cfg.seq_len - 1 - q) * cfg.stride;
            seq.push(extract_features(&history[..=pos], cfg.window, &cfg.clock)?);
        }
        let mut x = Vec::with_capacity(cfg.seq_len * FEATURE_COUNT);
        self.encode(&seq, &mut x);
        let xt: Vec<T> = x.iter().map(|&v| T::lit(v)).collect();
        let predicted = self.model.predict(&xt, cfg.seq_len)?.as_f64() * self.target_scale + self.target_offset;
        let baseline = trailing_mean(history, t, cfg.window);
        let (low, high) = self.band_for(predicted);
        Ok(Forecast { predicted, burst_flag: predicted > burst_threshold * baseline, low, high, baseline })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = PredictorMeta {
            config: self.config.clone(),
            scaler: self.scaler.clone(),
            target_offset: self.target_offset,
            target_scale: self.target_scale,
            band: self.band,
        };
        Checkpoint::from_params(CHECKPOINT_KIND, serde_json::to_value(meta).expect("meta serializes"), &self.model.params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, LstmError> {
        let meta: PredictorMeta = serde_json::from_value(ck.meta.clone())
            .map_err(|e| LstmError::Invalid(format!("predictor metadata: {e}")))?;
        meta.config.validate()?;
        let mut model = Lstm::new(meta.config.lstm.clone());
        ck.load_into(CHECKPOINT_KIND, &mut model.params)?;
        Ok(Self {
            config: meta.config,
            scaler: meta.scaler,
            target_offset: meta.target_offset,
            target_scale: meta.target_scale,
            band: meta.band,
            model,
        })
    }
}

pub fn write_dataset_csv<W: Write>(rows: &[MarketTick], out: W) -> Result<(), LstmError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(input: R) -> Result<Vec<MarketTick>, LstmError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        let a = [100.0, 200.0, 50.0, 80.0];
        assert_eq!(accuracy(&a, &a, 0.1).unwrap().fraction, 1.0);
        let off: Vec<f64> = a.iter().map(|x| x * 1.5).collect();
        assert_eq!(accuracy(&off, &a, 0.1).unwrap().fraction, 0.0);
        let half = [100.0, 200.0, 75.0, 120.0];
        assert_eq!(accuracy(&half, &a, 0.1).unwrap().fraction, 0.5);
        let z = accuracy(&[1.0, 1.0], &[0.0, 1.0], 0.1).unwrap();
        assert_eq!((z.counted, z.excluded, z.fraction), (1, 1, 1.0));
        assert!(accuracy(&[1.0], &[1.0, 2.0], 0.1).is_err());
    }

    #[test]
    fn series_split_on_gaps() {
        let mk = |t| MarketTick {
            tick: t,
            day: 0,
            time_of_day_s: 0.0,
            volume: 1.0,
            volatility: 0.0,
            order_cancel_ratio: 0.0,
            burst_active: false,
            busiest_util: 0.0,
        };
        let rows: Vec<_> = [0, 1, 2, 0, 1, 5].into_iter().map(mk).collect();
        let s = split_series(&rows);
        assert_eq!(s.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 2, 1]);
        let mut buf = Vec::new();
        write_dataset_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_dataset_csv(buf.as_slice()).unwrap(), rows);
    }
}
