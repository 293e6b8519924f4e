//! Rollout collection, generalized advantage estimation and the clipped
//! surrogate update.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::Environment;
use super::policy::{PolicyCache, PolicyNet};
use super::PpoConfig;
use crate::error::{Error, Result};
use crate::neural::{adam_step, AdamConfig, AdamState, ParamSet, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
}

/// A horizon of transitions plus the value of the state that follows the
/// last one (0 when that transition ended an episode).
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub transitions: Vec<Transition>,
    pub last_value: f64,
}

/// Advantages and returns by the GAE recursion. `dones[t]` marks that the
/// episode ended with transition `t`, so nothing is bootstrapped past it.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "trajectory fields differ in length");
    let mut advantages = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lambda * live * running;
        advantages[t] = running;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

/// Draw `samples` actions with probability `p1` of action 1 and return the
/// majority; a tie gives action 0.
pub fn majority_action<R: Rng>(p1: f64, samples: usize, rng: &mut R) -> usize {
    assert!(samples >= 1, "at least one sample is required");
    let ones = (0..samples).filter(|_| rng.gen::<f64>() < p1).count();
    usize::from(2 * ones > samples)
}

pub fn eval_action<R: Rng>(
    net: &PolicyNet,
    params: &ParamSet,
    state: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<usize> {
    let (p, _) = net.policy_value(params, state)?;
    Ok(majority_action(p[1], samples, rng))
}

/// Keeps the in-progress episode across horizon boundaries.
#[derive(Debug, Default)]
pub struct Collector {
    state: Option<Vec<f64>>,
    episode_return: f64,
    pub finished_returns: Vec<f64>,
}

impl Collector {
    pub fn collect<E: Environment>(
        &mut self,
        env: &mut E,
        net: &PolicyNet,
        params: &ParamSet,
        horizon: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Rollout> {
        let mut transitions = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let state = match self.state.take() {
                Some(s) => s,
                None => {
                    self.episode_return = 0.0;
                    env.reset(rng)?
                }
            };
            let (p, value) = net.policy_value(params, &state)?;
            let action = usize::from(rng.gen::<f64>() < p[1]);
            let step = env.step(action)?;
            self.episode_return += step.reward;
            transitions.push(Transition {
                state,
                action,
                log_prob: p[action].max(f64::MIN_POSITIVE).ln(),
                value,
                reward: step.reward,
                done: step.done,
            });
            if step.done {
                self.finished_returns.push(self.episode_return);
            } else {
                self.state = Some(step.state);
            }
        }
        let last_value = match &self.state {
            Some(s) => net.policy_value(params, s)?.1,
            None => 0.0,
        };
        Ok(Rollout {
            transitions,
            last_value,
        })
    }
}

/// Training inputs for one update: states with their sampled actions,
/// behaviour log-probabilities, advantages and returns.
#[derive(Debug, Clone)]
pub struct PpoBatch {
    pub states: Tensor,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    pub fn from_rollout(rollout: &Rollout, config: &PpoConfig) -> Result<Self> {
        let t = &rollout.transitions;
        let rewards: Vec<f64> = t.iter().map(|x| x.reward).collect();
        let values: Vec<f64> = t.iter().map(|x| x.value).collect();
        let dones: Vec<bool> = t.iter().map(|x| x.done).collect();
        let (advantages, returns) = compute_gae(
            &rewards,
            &values,
            &dones,
            rollout.last_value,
            config.gamma,
            config.gae_lambda,
        );
        let states = Tensor::from_rows(&t.iter().map(|x| x.state.clone()).collect::<Vec<_>>())?;
        Ok(PpoBatch {
            states,
            actions: t.iter().map(|x| x.action).collect(),
            old_log_probs: t.iter().map(|x| x.log_prob).collect(),
            advantages,
            returns,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Rescale advantages to mean 0 and standard deviation 1.
    pub fn normalize_advantages(&mut self) {
        let n = self.advantages.len() as f64;
        if n < 2.0 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt() + 1e-8;
        self.advantages.iter_mut().for_each(|a| *a = (*a - mean) / std);
    }

    fn select(&self, idx: &[usize]) -> Result<PpoBatch> {
        Ok(PpoBatch {
            states: Tensor::from_rows(&idx.iter().map(|&i| self.states.row(i).to_vec()).collect::<Vec<_>>())?,
            actions: idx.iter().map(|&i| self.actions[i]).collect(),
            old_log_probs: idx.iter().map(|&i| self.old_log_probs[i]).collect(),
            advantages: idx.iter().map(|&i| self.advantages[i]).collect(),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub total_loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

impl PpoStats {
    fn is_finite(&self) -> bool {
        [
            self.total_loss,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.approx_kl,
        ]
        .iter()
        .all(|x| x.is_finite())
    }

    fn accumulate(&mut self, other: &PpoStats, weight: f64) {
        self.total_loss += weight * other.total_loss;
        self.policy_loss += weight * other.policy_loss;
        self.value_loss += weight * other.value_loss;
        self.entropy += weight * other.entropy;
        self.clip_fraction += weight * other.clip_fraction;
        self.approx_kl += weight * other.approx_kl;
    }
}

/// Combined loss `policy + vf·value − ent·entropy` over a minibatch, with
/// its parameter gradient. Advantages are used as given.
pub fn ppo_loss(net: &PolicyNet, params: &ParamSet, batch: &PpoBatch, config: &PpoConfig) -> Result<(PpoStats, ParamSet)> {
    let m = batch.len();
    if m == 0 {
        return Err(Error::Validation("empty PPO minibatch".into()));
    }
    let inv = 1.0 / m as f64;
    let cache: PolicyCache = net.forward(params, &batch.states)?;
    let eps = config.clip_epsilon;
    let mut stats = PpoStats::default();
    let mut d_logits = Tensor::zeros(&[m, 2]);
    let mut d_values = vec![0.0; m];
    for i in 0..m {
        let lp = cache.log_probs(i);
        let p = [lp[0].exp(), lp[1].exp()];
        let a = batch.actions[i];
        let adv = batch.advantages[i];
        let ratio = (lp[a] - batch.old_log_probs[i]).exp();
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        stats.policy_loss -= unclipped.min(clipped) * inv;
        if (ratio - 1.0).abs() > eps {
            stats.clip_fraction += inv;
        }
        stats.approx_kl += (batch.old_log_probs[i] - lp[a]) * inv;
        let d_logp = if unclipped <= clipped { -adv * ratio * inv } else { 0.0 };

        let entropy = -(p[0] * lp[0] + p[1] * lp[1]);
        stats.entropy += entropy * inv;

        let row = d_logits.row_mut(i);
        for k in 0..2 {
            let onehot = if k == a { 1.0 } else { 0.0 };
            row[k] = d_logp * (onehot - p[k]) + config.entropy_coef * inv * p[k] * (lp[k] + entropy);
        }

        let err = cache.values[i] - batch.returns[i];
        stats.value_loss += err * err * inv;
        d_values[i] = config.value_coef * 2.0 * err * inv;
    }
    stats.total_loss = stats.policy_loss + config.value_coef * stats.value_loss - config.entropy_coef * stats.entropy;
    let mut grads = params.zeros_like();
    net.backward(params, &cache, &d_logits, &d_values, &mut grads)?;
    Ok((stats, grads))
}

/// Rescale `grads` so their global L2 norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut ParamSet, max_norm: f64) -> f64 {
    let norm = grads.l2_norm();
    if norm > max_norm {
        grads.scale(max_norm / (norm + 1e-6));
    }
    norm
}

/// Several epochs of minibatch Adam steps on the clipped surrogate.
/// Returns the statistics averaged over every minibatch step.
pub fn ppo_update(
    net: &PolicyNet,
    params: &mut ParamSet,
    adam: &mut AdamState,
    mut batch: PpoBatch,
    config: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PpoStats> {
    if !batch.len().is_multiple_of(config.minibatches) || batch.is_empty() {
        return Err(Error::Validation(format!(
            "batch of {} transitions does not split into {} minibatches",
            batch.len(),
            config.minibatches
        )));
    }
    batch.normalize_advantages();
    let adam_config = AdamConfig {
        epsilon: 1e-5,
        ..AdamConfig::with_learning_rate(config.learning_rate)
    };
    let size = batch.len() / config.minibatches;
    let steps = (config.update_epochs * config.minibatches) as f64;
    let mut mean = PpoStats::default();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    for _ in 0..config.update_epochs {
        order.shuffle(rng);
        for idx in order.chunks(size) {
            let mb = batch.select(idx)?;
            let (stats, mut grads) = ppo_loss(net, params, &mb, config)?;
            if !stats.is_finite() || !grads.all_finite() {
                return Err(Error::Numerical(format!("non-finite PPO loss: {stats:?}")));
            }
            clip_grad_norm(&mut grads, config.max_grad_norm);
            adam_step(params, &grads, adam, &adam_config)?;
            mean.accumulate(&stats, 1.0 / steps);
        }
    }
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::{param_difference, param_rel_error};
    use rand::SeedableRng;

    fn random_batch(net: &PolicyNet, params: &ParamSet, m: usize, rng: &mut ChaCha8Rng) -> PpoBatch {
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..net.state_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let states = Tensor::from_rows(&rows).unwrap();
        let cache = net.forward(params, &states).unwrap();
        let actions: Vec<usize> = (0..m).map(|_| rng.gen_range(0..2)).collect();
        PpoBatch {
            old_log_probs: actions
                .iter()
                .enumerate()
                .map(|(i, &a)| cache.log_probs(i)[a] + rng.gen_range(-0.3..0.3))
                .collect(),
            states,
            actions,
            advantages: (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            returns: (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn gae_collapses_with_zero_discount() {
        let (adv, ret) = compute_gae(&[1.0, 2.0, 3.0], &[0.5, 0.5, 0.5], &[false, true, false], 9.0, 0.0, 0.0);
        assert_eq!(adv, vec![0.5, 1.5, 2.5]);
        assert_eq!(ret, vec![1.0, 2.0, 3.0]);
        let (adv, _) = compute_gae(&[0.0; 4], &[0.0; 4], &[false; 4], 0.0, 0.99, 0.95);
        assert_eq!(adv, vec![0.0; 4]);
    }

    #[test]
    fn same_parameters_mean_no_clipping() {
        let net = PolicyNet::new(4, 5);
        let params = net.init_params(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut batch = random_batch(&net, &params, 8, &mut rng);
        let cache = net.forward(&params, &batch.states).unwrap();
        for i in 0..8 {
            batch.old_log_probs[i] = cache.log_probs(i)[batch.actions[i]];
        }
        let (stats, _) = ppo_loss(&net, &params, &batch, &PpoConfig::default()).unwrap();
        assert_eq!(stats.clip_fraction, 0.0);
        let expected = -batch.advantages.iter().sum::<f64>() / 8.0;
        assert!((stats.policy_loss - expected).abs() < 1e-12);

        batch.advantages.iter_mut().for_each(|a| *a = 0.0);
        let (stats, _) = ppo_loss(&net, &params, &batch, &PpoConfig::default()).unwrap();
        assert_eq!(stats.policy_loss, 0.0);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let net = PolicyNet::new(4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for seed in 0..5 {
            let params = net.init_params(seed);
            let batch = random_batch(&net, &params, 6, &mut rng);
            let config = PpoConfig::default();
            let (_, analytic) = ppo_loss(&net, &params, &batch, &config).unwrap();
            let numeric = param_difference(&params, |p| ppo_loss(&net, p, &batch, &config).unwrap().0.total_loss);
            let err = param_rel_error(&analytic, &numeric);
            assert!(err < 1e-5, "relative error {err}");
        }
    }

    #[test]
    fn majority_vote() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(majority_action(1.0, 100, &mut rng), 1);
        assert_eq!(majority_action(0.0, 100, &mut rng), 0);
        assert_eq!(majority_action(1.0, 2, &mut rng), 1);
        let a: Vec<usize> = (0..20).map(|_| majority_action(0.5, 100, &mut ChaCha8Rng::seed_from_u64(7))).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
    }
}
