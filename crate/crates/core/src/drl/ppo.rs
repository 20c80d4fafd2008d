use serde::{Deserialize, Serialize};

use super::{DrlError, PolicyAction, PolicyNet};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: PolicyAction,
    /// Log-probability under the behavior policy.
    pub log_prob: f64,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Ordered transitions with the quantities derived from them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    /// Discounted return of the observed rewards, reset at episode ends.
    pub returns: Vec<f64>,
    /// Normalized advantage estimates.
    pub advantages: Vec<f64>,
    /// Regression targets for the critic (`advantage + V` before
    /// normalization).
    pub value_targets: Vec<f64>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a transition; rewards must be non-positive.
    pub fn push(&mut self, t: Transition) -> Result<(), DrlError> {
        if !(t.reward <= 0.0) {
            return Err(DrlError::Invalid(format!("reward {} must be <= 0", t.reward)));
        }
        self.transitions.push(t);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    pub fn batch(&self) -> PpoBatch {
        PpoBatch {
            states: self.transitions.iter().map(|t| t.state.clone()).collect(),
            actions: self.transitions.iter().map(|t| t.action.clone()).collect(),
            old_log_probs: self.transitions.iter().map(|t| t.log_prob).collect(),
            advantages: self.advantages.clone(),
            value_targets: self.value_targets.clone(),
        }
    }
}

/// Fills returns, value targets and normalized GAE advantages. `values[t]`
/// is V(s_t); `bootstrap` is V of the state after the last transition,
/// ignored when that transition is terminal.
pub fn compute_returns_and_advantages(
    traj: &mut Trajectory,
    values: &[f64],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(), DrlError> {
    let n = traj.len();
    if n == 0 {
        return Err(DrlError::EmptyTrajectory);
    }
    if values.len() != n {
        return Err(DrlError::Dimension { expected: n, found: values.len() });
    }
    let mut returns = vec![0.0; n];
    let mut adv = vec![0.0; n];
    let (mut g, mut a) = (0.0, 0.0);
    for t in (0..n).rev() {
        let tr = &traj.transitions[t];
        let cont = if tr.done { 0.0 } else { 1.0 };
        let next_v = if t + 1 < n { values[t + 1] } else { bootstrap };
        g = tr.reward + gamma * cont * g;
        let delta = tr.reward + gamma * cont * next_v - values[t];
        a = delta + gamma * lambda * cont * a;
        returns[t] = g;
        adv[t] = a;
    }
    traj.value_targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    let mean = adv.iter().sum::<f64>() / n as f64;
    let std = (adv.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    traj.advantages = adv.iter().map(|x| if std > 1e-8 { (x - mean) / std } else { x - mean }).collect();
    traj.returns = returns;
    Ok(())
}

/// Training batch for the clipped objective.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PpoBatch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<PolicyAction>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub clip_eps: f64,
    pub value_coef: f64,
    /// Weight of the dueling Q regression on the taken categorical actions.
    pub q_coef: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { clip_eps: 0.2, value_coef: 0.5, q_coef: 0.5 }
    }
}

/// `min(r·A, clip(r, 1-ε, 1+ε)·A)`.
pub fn clipped_objective(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoLoss<T> {
    /// Negated clipped objective plus the critic terms.
    pub loss: f64,
    pub objective: f64,
    pub unclipped_objective: f64,
    pub critic_loss: f64,
    pub clip_fraction: f64,
    /// Transitions dropped for a non-finite probability ratio.
    pub excluded: usize,
    pub grads: Vec<T>,
}

/// Loss and exact gradients over the transitions `idx` of `batch`.
pub fn ppo_loss<T: Scalar>(
    net: &PolicyNet<T>,
    batch: &PpoBatch,
    idx: &[usize],
    cfg: &LossConfig,
) -> Result<PpoLoss<T>, DrlError> {
    if cfg.clip_eps <= 0.0 {
        return Err(DrlError::Invalid("clip epsilon must be > 0".into()));
    }
    let lay = net.layout().clone();
    let mut g = vec![T::zero(); net.params.len()];
    let (mut obj, mut unclipped, mut critic) = (0.0, 0.0, 0.0);
    let (mut used, mut excluded, mut clipped) = (0usize, 0usize, 0usize);
    let heads = lay.categorical.len();
    let off_g = lay.logits();
    let stds: Vec<T> = net.log_stds().to_vec();
    for &i in idx {
        let s: Vec<T> = batch.states[i].iter().map(|&v| T::lit(v)).collect();
        let eval = net.evaluate(&s)?;
        let action = &batch.actions[i];
        let logp = net.log_prob(&eval, action).as_f64();
        let ratio = (logp - batch.old_log_probs[i]).exp();
        if !ratio.is_finite() {
            excluded += 1;
            continue;
        }
        used += 1;
        let adv = batch.advantages[i];
        let target = batch.value_targets[i];
        let o = clipped_objective(ratio, adv, cfg.clip_eps);
        obj += o;
        unclipped += ratio * adv;
        if (ratio - 1.0).abs() > cfg.clip_eps {
            clipped += 1;
        }
        // d(-objective)/d logp; zero when the clipped branch is the minimum.
        let c = if ratio * adv <= o { T::lit(-ratio * adv) } else { T::zero() };

        let mut dpi = vec![T::zero(); lay.policy_outputs()];
        let mut da = vec![T::zero(); lay.logits()];
        let mut dv = T::zero();
        let mut off = 0;
        for (h, &n) in lay.categorical.iter().enumerate() {
            let ls = super::policy::log_softmax(&eval.pi[off..off + n]);
            let a = action.choices[h];
            for j in 0..n {
                let onehot = if j == a { T::one() } else { T::zero() };
                dpi[off + j] = c * (onehot - ls[j].exp());
            }
            let adv_block = &eval.advantage[off..off + n];
            let mean = adv_block.iter().copied().sum::<T>() / T::from_usize_lossy(n);
            let q = eval.value + adv_block[a] - mean;
            let e = q - T::lit(target);
            let w = T::lit(cfg.q_coef / heads as f64);
            critic += (w * e * e).as_f64();
            let de = T::lit(2.0) * w * e;
            dv += de;
            let inv_n = T::one() / T::from_usize_lossy(n);
            for j in 0..n {
                let onehot = if j == a { T::one() } else { T::zero() };
                da[off + j] += de * (onehot - inv_n);
            }
            off += n;
        }
        for (j, &ls) in stds.iter().enumerate() {
            let mu = eval.pi[off_g + j];
            let var = (ls + ls).exp();
            let d = T::lit(action.raw[j]) - mu;
            dpi[off_g + j] = c * d / var;
            g[net.log_std + j] += c * (d * d / var - T::one());
        }
        let ev = eval.value - T::lit(target);
        critic += cfg.value_coef * (ev * ev).as_f64();
        dv += T::lit(2.0 * cfg.value_coef) * ev;
        net.backward(&eval, &dpi, dv, &da, &mut g);
    }
    if used == 0 {
        return Err(DrlError::EmptyTrajectory);
    }
    let inv = 1.0 / used as f64;
    let ti = T::lit(inv);
    g.iter_mut().for_each(|x| *x *= ti);
    let objective = obj * inv;
    let critic_loss = critic * inv;
    Ok(PpoLoss {
        loss: -objective + critic_loss,
        objective,
        unclipped_objective: unclipped * inv,
        critic_loss,
        clip_fraction: clipped as f64 * inv,
        excluded,
        grads: g,
    })
}
