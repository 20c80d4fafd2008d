use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::DrlError;
use crate::nn::{Checkpoint, Linear, ParamBuffer};
use crate::scalar::{sigmoid, Scalar};

const CHECKPOINT_KIND: &str = "dueling-policy";
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Shape of the action space: independent categorical heads followed by
/// independent Gaussian dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionLayout {
    pub categorical: Vec<usize>,
    pub gaussian: usize,
}

impl ActionLayout {
    pub fn logits(&self) -> usize {
        self.categorical.iter().sum()
    }

    pub fn policy_outputs(&self) -> usize {
        self.logits() + self.gaussian
    }
}

/// A sampled or greedy action. `raw` holds the unsquashed Gaussian draws;
/// `squashed()` maps them into `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyAction {
    pub choices: Vec<usize>,
    pub raw: Vec<f64>,
}

impl PolicyAction {
    pub fn squashed(&self) -> Vec<f64> {
        self.raw.iter().map(|&u| sigmoid(u)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub state_dim: usize,
    pub hidden: Vec<usize>,
    pub layout: ActionLayout,
    pub init_log_std: f64,
}

impl PolicyConfig {
    pub fn new(state_dim: usize, layout: ActionLayout) -> Self {
        Self { state_dim, hidden: vec![64, 64], layout, init_log_std: -0.5 }
    }
}

/// One forward pass for a single state.
#[derive(Debug, Clone)]
pub struct PolicyEval<T> {
    /// Trunk activations; `trunk[0]` is the input.
    pub trunk: Vec<Vec<T>>,
    /// Categorical logits followed by Gaussian means.
    pub pi: Vec<T>,
    pub value: T,
    /// Advantage stream, one block per categorical head.
    pub advantage: Vec<T>,
}

/// Shared tanh trunk with a policy head, a state-value head and an
/// advantage head. Gaussian log standard deviations are free parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet<T> {
    pub config: PolicyConfig,
    pub params: ParamBuffer<T>,
    pub trunk: Vec<Linear>,
    pub pi_head: Linear,
    pub v_head: Linear,
    pub a_head: Linear,
    pub log_std: usize,
}

/// `V + (A - mean(A))` for one advantage block.
pub fn dueling_combine<T: Scalar>(value: T, adv: &[T]) -> Vec<T> {
    if adv.is_empty() {
        return Vec::new();
    }
    let mean = adv.iter().copied().sum::<T>() / T::from_usize_lossy(adv.len());
    adv.iter().map(|&a| value + (a - mean)).collect()
}

/// `log softmax(z)` computed with the max shift.
pub fn log_softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
    z.iter().map(|&v| v - lse).collect()
}

impl<T: Scalar> PolicyNet<T> {
    pub fn new(config: PolicyConfig) -> Self {
        let mut params = ParamBuffer::new();
        let mut trunk = Vec::new();
        let mut inp = config.state_dim;
        for (i, &h) in config.hidden.iter().enumerate() {
            trunk.push(Linear::register(&mut params, &format!("trunk.l{i}"), inp, h));
            inp = h;
        }
        let pi_head = Linear::register(&mut params, "pi", inp, config.layout.policy_outputs());
        let v_head = Linear::register(&mut params, "v", inp, 1);
        let a_head = Linear::register(&mut params, "a", inp, config.layout.logits());
        let log_std = params.add("log_std", &[config.layout.gaussian]);
        Self { config, params, trunk, pi_head, v_head, a_head, log_std }
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for l in &self.trunk {
            l.init(&mut self.params.data, 1.0, rng);
        }
        self.pi_head.init(&mut self.params.data, 0.01, rng);
        self.v_head.init(&mut self.params.data, 1.0, rng);
        self.a_head.init(&mut self.params.data, 0.1, rng);
        self.params.fill("log_std", self.config.init_log_std);
    }

    pub fn layout(&self) -> &ActionLayout {
        &self.config.layout
    }

    fn hidden_dim(&self) -> usize {
        self.trunk.last().map_or(self.config.state_dim, |l| l.out)
    }

    pub fn log_stds(&self) -> &[T] {
        &self.params.data[self.log_std..self.log_std + self.config.layout.gaussian]
    }

    pub fn evaluate(&self, state: &[T]) -> Result<PolicyEval<T>, DrlError> {
        if state.len() != self.config.state_dim {
            return Err(DrlError::Dimension { expected: self.config.state_dim, found: state.len() });
        }
        let p = &self.params.data;
        let mut trunk = Vec::with_capacity(self.trunk.len() + 1);
        trunk.push(state.to_vec());
        for l in &self.trunk {
            let mut y = vec![T::zero(); l.out];
            l.forward(p, trunk.last().expect("input present"), &mut y);
            y.iter_mut().for_each(|v| *v = v.tanh());
            trunk.push(y);
        }
        let h = trunk.last().expect("input present");
        let mut pi = vec![T::zero(); self.pi_head.out];
        self.pi_head.forward(p, h, &mut pi);
        let mut v = [T::zero()];
        self.v_head.forward(p, h, &mut v);
        let mut advantage = vec![T::zero(); self.a_head.out];
        self.a_head.forward(p, h, &mut advantage);
        Ok(PolicyEval { trunk, pi, value: v[0], advantage })
    }

    /// Per-head probabilities of the categorical heads.
    pub fn probabilities(&self, eval: &PolicyEval<T>) -> Vec<Vec<T>> {
        let mut off = 0;
        self.config
            .layout
            .categorical
            .iter()
            .map(|&n| {
                let lp = log_softmax(&eval.pi[off..off + n]);
                off += n;
                lp.into_iter().map(|v| v.exp()).collect()
            })
            .collect()
    }

    /// Q values per categorical head from the dueling critic.
    pub fn dueling_q(&self, eval: &PolicyEval<T>) -> Vec<Vec<T>> {
        let mut off = 0;
        self.config
            .layout
            .categorical
            .iter()
            .map(|&n| {
                let q = dueling_combine(eval.value, &eval.advantage[off..off + n]);
                off += n;
                q
            })
            .collect()
    }

    /// Joint log-probability of `action` (Gaussian terms on the raw draws).
    pub fn log_prob(&self, eval: &PolicyEval<T>, action: &PolicyAction) -> T {
        let lay = &self.config.layout;
        let mut lp = T::zero();
        let mut off = 0;
        for (h, &n) in lay.categorical.iter().enumerate() {
            let ls = log_softmax(&eval.pi[off..off + n]);
            lp += ls[action.choices[h]];
            off += n;
        }
        let stds = self.log_stds();
        for j in 0..lay.gaussian {
            let mu = eval.pi[off + j];
            let ls = stds[j];
            let z = (T::lit(action.raw[j]) - mu) / ls.exp();
            lp += -T::lit(0.5) * z * z - ls - T::lit(HALF_LN_2PI);
        }
        lp
    }

    pub fn act<R: Rng + ?Sized>(
        &self,
        state: &[T],
        mode: ActMode,
        rng: &mut R,
    ) -> Result<(PolicyAction, f64), DrlError> {
        let eval = self.evaluate(state)?;
        let lay = &self.config.layout;
        let mut choices = Vec::with_capacity(lay.categorical.len());
        for probs in self.probabilities(&eval) {
            let c = match mode {
                ActMode::Greedy => {
                    let mut best = 0;
                    for (i, &p) in probs.iter().enumerate() {
                        if p > probs[best] {
                            best = i;
                        }
                    }
                    best
                }
                ActMode::Sample => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = probs.len() - 1;
                    for (i, &p) in probs.iter().enumerate() {
                        acc += p.as_f64();
                        if u < acc {
                            pick = i;
                            break;
                        }
                    }
                    pick
                }
            };
            choices.push(c);
        }
        let off = lay.logits();
        let stds = self.log_stds();
        let raw = (0..lay.gaussian)
            .map(|j| {
                let mu = eval.pi[off + j].as_f64();
                match mode {
                    ActMode::Greedy => mu,
                    ActMode::Sample => {
                        let z: f64 = StandardNormal.sample(rng);
                        mu + stds[j].as_f64().exp() * z
                    }
                }
            })
            .collect();
        let action = PolicyAction { choices, raw };
        let lp = self.log_prob(&eval, &action).as_f64();
        Ok((action, lp))
    }

    /// Gradient of `dpi`, `dv`, `da` (w.r.t. head outputs) into parameter
    /// gradients `g`.
    pub fn backward(&self, eval: &PolicyEval<T>, dpi: &[T], dv: T, da: &[T], g: &mut [T]) {
        let p = &self.params.data;
        let h = eval.trunk.last().expect("input present");
        let mut dh = vec![T::zero(); self.hidden_dim()];
        self.pi_head.backward(p, h, dpi, g, Some(&mut dh));
        self.v_head.backward(p, h, &[dv], g, Some(&mut dh));
        self.a_head.backward(p, h, da, g, Some(&mut dh));
        for (i, l) in self.trunk.iter().enumerate().rev() {
            for (d, &a) in dh.iter_mut().zip(&eval.trunk[i + 1]) {
                *d *= T::one() - a * a;
            }
            let mut dx = vec![T::zero(); l.inp];
            l.backward(p, &eval.trunk[i], &dh, g, if i > 0 { Some(&mut dx) } else { None });
            dh = dx;
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_params(CHECKPOINT_KIND, serde_json::to_value(&self.config).expect("config serializes"), &self.params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, DrlError> {
        let config: PolicyConfig =
            serde_json::from_value(ck.meta.clone()).map_err(|e| DrlError::Invalid(format!("policy metadata: {e}")))?;
        let mut net = Self::new(config);
        ck.load_into(CHECKPOINT_KIND, &mut net.params)?;
        Ok(net)
    }
}
