use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    compute_returns_and_advantages, ppo_loss, ActMode, DrlError, Env, LossConfig, PolicyNet, Trajectory, Transition,
};
use crate::lstm::clip_global_norm;
use crate::nn::{Adam, AdamConfig};
use crate::rng::{rng_for, stream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub episode_len: usize,
    pub episodes: usize,
    pub value_coef: f64,
    pub q_coef: f64,
    pub max_grad_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            learning_rate: 3e-4,
            epochs: 4,
            minibatch: 64,
            episode_len: 64,
            episodes: 100,
            value_coef: 0.5,
            q_coef: 0.5,
            max_grad_norm: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DrlError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(DrlError::Invalid(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if !(self.clip_eps > 0.0) {
            return Err(DrlError::Invalid("clip epsilon must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) || self.learning_rate < 0.0 {
            return Err(DrlError::Invalid("gae_lambda must be in [0, 1] and learning_rate >= 0".into()));
        }
        if self.minibatch == 0 || self.episode_len == 0 {
            return Err(DrlError::Invalid("minibatch and episode_len must be > 0".into()));
        }
        Ok(())
    }

    fn loss(&self) -> LossConfig {
        LossConfig { clip_eps: self.clip_eps, value_coef: self.value_coef, q_coef: self.q_coef }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub mean_reward: f64,
    pub loss: f64,
    pub clip_fraction: f64,
}

/// Collects one episode of `len` steps with the sampling policy. `done`
/// flags from the environment only cut return accumulation.
pub fn collect_episode<T: Scalar, E: Env + ?Sized>(
    policy: &PolicyNet<T>,
    env: &mut E,
    episode: u64,
    len: usize,
    seed: u64,
) -> Result<(Trajectory, Vec<f64>, f64), DrlError> {
    let mut rng = rng_for(seed, stream::POLICY, episode);
    let mut traj = Trajectory::new();
    let mut values = Vec::with_capacity(len);
    let mut state = env.reset(episode);
    for _ in 0..len {
        let s: Vec<T> = state.iter().map(|&v| T::lit(v)).collect();
        values.push(policy.evaluate(&s)?.value.as_f64());
        let (action, log_prob) = policy.act(&s, ActMode::Sample, &mut rng)?;
        let step = env.step(&action)?;
        traj.push(Transition {
            state: std::mem::take(&mut state),
            action,
            log_prob,
            reward: step.reward,
            next_state: step.next_state.clone(),
            done: step.done,
        })?;
        state = step.next_state;
    }
    let last: Vec<T> = state.iter().map(|&v| T::lit(v)).collect();
    let bootstrap = policy.evaluate(&last)?.value.as_f64();
    Ok((traj, values, bootstrap))
}

/// Clipped-ratio training: each episode is collected, its advantages are
/// estimated, then `epochs` passes of minibatch updates follow.
pub fn train_scheduler<T: Scalar, E: Env + ?Sized>(
    policy: &mut PolicyNet<T>,
    env: &mut E,
    cfg: &TrainConfig,
) -> Result<Vec<CurvePoint>, DrlError> {
    cfg.validate()?;
    if env.state_dim() != policy.config.state_dim || env.layout() != policy.config.layout {
        return Err(DrlError::Invalid("policy shape does not match the environment".into()));
    }
    let mut adam = Adam::new(policy.params.len(), AdamConfig { lr: cfg.learning_rate, ..AdamConfig::default() });
    let loss_cfg = cfg.loss();
    let mut curve = Vec::with_capacity(cfg.episodes);
    for ep in 0..cfg.episodes {
        let (mut traj, values, bootstrap) = collect_episode(policy, env, ep as u64, cfg.episode_len, cfg.seed)?;
        let mean_reward = traj.rewards().iter().sum::<f64>() / traj.len() as f64;
        compute_returns_and_advantages(&mut traj, &values, bootstrap, cfg.gamma, cfg.gae_lambda)?;
        let batch = traj.batch();
        let mut idx: Vec<usize> = (0..batch.len()).collect();
        let mut shuffle = rng_for(cfg.seed, stream::TRAIN, ep as u64);
        let (mut loss_sum, mut clip_sum, mut updates) = (0.0, 0.0, 0usize);
        for _ in 0..cfg.epochs {
            idx.shuffle(&mut shuffle);
            for mb in idx.chunks(cfg.minibatch) {
                let mut out = ppo_loss(policy, &batch, mb, &loss_cfg)?;
                if !out.loss.is_finite() || out.grads.iter().any(|g| !g.is_finite()) {
                    return Err(DrlError::Divergence {
                        episode: ep,
                        loss: out.loss,
                        snapshot: Box::new(policy.to_checkpoint()),
                    });
                }
                clip_global_norm(&mut out.grads, cfg.max_grad_norm);
                adam.step(&mut policy.params.data, &out.grads);
                loss_sum += out.loss;
                clip_sum += out.clip_fraction;
                updates += 1;
            }
        }
        let n = updates.max(1) as f64;
        curve.push(CurvePoint { episode: ep, mean_reward, loss: loss_sum / n, clip_fraction: clip_sum / n });
    }
    Ok(curve)
}

pub fn write_curve_csv<W: Write>(curve: &[CurvePoint], out: W) -> Result<(), DrlError> {
    let mut w = csv::Writer::from_writer(out);
    for p in curve {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
