use serde::{Deserialize, Serialize};

use super::{Chromosome, Evaluation, Evaluator, GeneSpace, HybridError};
use crate::drl::{encode_state, migration_shortlist, ppo_loss, ActMode, LossConfig, PolicyAction, PolicyNet, PpoBatch, StateEncoding};
use crate::lstm::clip_global_norm;
use crate::nn::{Adam, AdamConfig};
use crate::rng::{rng_for, stream};
use crate::scalar::Scalar;

/// Coefficients of `α·P + β·E − γ_cost·C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineReward {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_cost: f64,
}

impl Default for RefineReward {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 0.5, gamma_cost: 0.2 }
    }
}

impl RefineReward {
    /// `improvement` is the fitness decrease, `util_gain` the utilization
    /// increase and `cost` the size of the change.
    pub fn reward(&self, improvement: f64, util_gain: f64, cost: f64) -> f64 {
        self.alpha * improvement + self.beta * util_gain - self.gamma_cost * cost
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub reward: RefineReward,
    pub encoding: StateEncoding,
    pub shortlist: usize,
    /// Largest quota or priority change a Gaussian head can request.
    pub adjust_step: f64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    pub seed: u64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            reward: RefineReward::default(),
            encoding: StateEncoding::Full { load_scale: 100.0, latency_scale: 100.0 },
            shortlist: 4,
            adjust_step: 0.1,
            learning_rate: 1e-3,
            max_grad_norm: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RefineStats {
    pub transitions: usize,
    pub discarded: usize,
    pub replaced: usize,
}

/// Applies a scheduling-policy action as a delta on `x`: instance heads add
/// (to the emptiest node) or remove (from the fullest node) one instance,
/// the migration head moves one instance along a shortlisted pair, and the
/// Gaussian heads shift priority then quota by up to `adjust_step`.
pub fn apply_policy_delta(
    x: &Chromosome,
    action: &PolicyAction,
    node_cpu: &[f64],
    shortlist: usize,
    adjust_step: f64,
    space: &GeneSpace,
) -> Result<Chromosome, HybridError> {
    let (k, n) = (x.services, x.nodes);
    if action.choices.len() != k + 1 || action.raw.len() != 2 * k || node_cpu.len() != n {
        return Err(HybridError::Argument("policy action does not match the chromosome".into()));
    }
    let mut c = x.clone();
    for s in 0..k {
        match action.choices[s] {
            2 => {
                if let Some(j) = (0..n)
                    .filter(|&j| c.node_instances(j) < space.max_per_node && c.count(s, j) < space.max_per_cell)
                    .min_by(|&a, &b| c.node_load(a).total_cmp(&c.node_load(b)).then(a.cmp(&b)))
                {
                    *c.count_mut(s, j) += 1;
                }
            }
            0 if c.service_total(s) > 1 => {
                let j = (0..n).max_by(|&a, &b| c.count(s, a).cmp(&c.count(s, b)).then(b.cmp(&a))).expect("nodes > 0");
                *c.count_mut(s, j) -= 1;
            }
            _ => {}
        }
    }
    let pick = action.choices[k];
    if pick > 0 {
        if let Some(&(s, dst)) = migration_shortlist(node_cpu, &c.to_plan(), shortlist).get(pick - 1) {
            let src = (0..n)
                .filter(|&j| j != dst && c.count(s, j) > 0)
                .max_by(|&a, &b| c.count(s, a).cmp(&c.count(s, b)).then(b.cmp(&a)));
            if let Some(src) = src {
                *c.count_mut(s, src) -= 1;
                *c.count_mut(s, dst) += 1;
            }
        }
    }
    let sq = action.squashed();
    for s in 0..k {
        if space.evolve_priority {
            c.priority[s] = (c.priority[s] + (2.0 * sq[s] - 1.0) * adjust_step).clamp(0.0, 1.0);
        }
        let dq = (2.0 * sq[k + s] - 1.0) * adjust_step;
        c.quota[s] = match space.quota_step {
            Some(step) if dq.abs() >= step / 2.0 => space.snap_quota(c.quota[s] + step * dq.signum()),
            Some(_) => c.quota[s],
            None => space.snap_quota(c.quota[s] + dq),
        };
    }
    c.repair(space)?;
    Ok(c)
}

/// Reinforcement-learning refinement of elite solutions with a policy
/// shared with the learned scheduler.
pub struct Refiner<T> {
    pub policy: PolicyNet<T>,
    pub config: RefineConfig,
    adam: Adam<T>,
    calls: u64,
}

impl<T: Scalar> Refiner<T> {
    pub fn new(policy: PolicyNet<T>, config: RefineConfig) -> Self {
        let adam = Adam::new(policy.params.len(), AdamConfig { lr: config.learning_rate, ..AdamConfig::default() });
        Self { policy, config, adam, calls: 0 }
    }

    /// One policy query and one policy update per elite member; a refined
    /// chromosome replaces the member only when its fitness is lower.
    pub fn refine<E: Evaluator + ?Sized>(
        &mut self,
        elite: &mut [(Chromosome, Evaluation)],
        eval: &mut E,
        space: &GeneSpace,
    ) -> Result<RefineStats, HybridError> {
        let mut stats = RefineStats::default();
        let mut rng = rng_for(self.config.seed, stream::SCHEDULER, self.calls);
        self.calls += 1;
        let loss_cfg = LossConfig { clip_eps: 0.2, value_coef: 0.0, q_coef: 0.0 };
        for (x, ev) in elite.iter_mut() {
            let Some(state) = &ev.state else { continue };
            let enc = encode_state(state, &self.config.encoding, self.policy.config.state_dim)?;
            let s: Vec<T> = enc.iter().map(|&v| T::lit(v)).collect();
            let (action, logp) = self.policy.act(&s, ActMode::Sample, &mut rng)?;
            let node_cpu: Vec<f64> = (0..state.nodes()).map(|j| state.node_util(j, 0)).collect();
            let cand = apply_policy_delta(x, &action, &node_cpu, self.config.shortlist, self.config.adjust_step, space)?;
            let cev = eval.evaluate(&cand);
            let r = self.config.reward.reward(
                ev.fitness - cev.fitness,
                cev.objectives.utilization - ev.objectives.utilization,
                cand.distance(x),
            );
            if !r.is_finite() {
                stats.discarded += 1;
                continue;
            }
            stats.transitions += 1;
            let batch = PpoBatch {
                states: vec![enc],
                actions: vec![action],
                old_log_probs: vec![logp],
                advantages: vec![r],
                value_targets: vec![0.0],
            };
            let mut out = ppo_loss(&self.policy, &batch, &[0], &loss_cfg)?;
            if out.grads.iter().all(|g| g.is_finite()) {
                clip_global_norm(&mut out.grads, self.config.max_grad_norm);
                self.adam.step(&mut self.policy.params.data, &out.grads);
            }
            if cev.fitness < ev.fitness {
                *x = cand;
                *ev = cev;
                stats.replaced += 1;
            }
        }
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_arithmetic() {
        let r = RefineReward { alpha: 1.0, beta: 0.0, gamma_cost: 0.0 };
        assert!((r.reward(0.05, 0.3, 2.0) - 0.05).abs() < 1e-15);
        assert_eq!(RefineReward::default().reward(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn zero_delta_action_is_identity() {
        let space = GeneSpace::default();
        let x = Chromosome { services: 2, nodes: 2, counts: vec![1, 1, 2, 0], quota: vec![0.2, 0.3], priority: vec![0.5, 0.7] };
        let a = PolicyAction { choices: vec![1, 1, 0], raw: vec![0.0; 4] };
        let y = apply_policy_delta(&x, &a, &[0.5, 0.2], 4, 0.1, &space).unwrap();
        assert_eq!(y, x);
        assert_eq!(y.distance(&x), 0.0);
    }
}
