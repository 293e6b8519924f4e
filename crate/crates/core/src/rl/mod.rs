//! Sentence selection as an episodic decision process trained with PPO.

mod env;
mod policy;
mod ppo;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_candidates, Question};
use crate::embeddings::EmbeddingSource;
use crate::error::{Error, Result};
use crate::neural::{AdamState, ParamSet};
use crate::summarizer::SummaryResult;

pub use env::{state_dim_for, BanditEnv, Environment, QuestionCycle, Step, SummaryEnv};
pub use policy::{PolicyCache, PolicyNet, DEFAULT_HIDDEN};
pub use ppo::{
    clip_grad_norm, compute_gae, eval_action, majority_action, ppo_loss, ppo_update, Collector, PpoBatch, PpoStats,
    Rollout, Transition,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub horizon: usize,
    pub minibatches: usize,
    pub total_timesteps: usize,
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub update_epochs: usize,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub eval_samples: usize,
    /// Timesteps between test-set evaluations.
    pub eval_interval: usize,
    pub hidden_dim: usize,
    pub candidate_cap: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            horizon: 1000,
            minibatches: 4,
            total_timesteps: 500_000,
            clip_epsilon: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            update_epochs: 4,
            learning_rate: 2.5e-4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            eval_samples: 100,
            eval_interval: 10_000,
            hidden_dim: DEFAULT_HIDDEN,
            candidate_cap: crate::corpus::DEFAULT_CANDIDATE_CAP,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.horizon == 0 || self.minibatches == 0 || !self.horizon.is_multiple_of(self.minibatches) {
            return fail(format!(
                "horizon {} must be a positive multiple of minibatches {}",
                self.horizon, self.minibatches
            ));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return fail(format!("clip_epsilon {} must lie in (0, 1)", self.clip_epsilon));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail("gamma and gae_lambda must lie in [0, 1]".into());
        }
        if !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) {
            return fail("learning_rate and max_grad_norm must be positive".into());
        }
        if self.update_epochs == 0 || self.eval_samples == 0 || self.eval_interval == 0 || self.hidden_dim == 0 {
            return fail("update_epochs, eval_samples, eval_interval and hidden_dim must be positive".into());
        }
        if self.candidate_cap == 0 {
            return fail("candidate_cap must be positive".into());
        }
        Ok(())
    }
}

/// A trained policy with the layout needed to run it.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    pub net: PolicyNet,
    pub params: ParamSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub timestep: usize,
    pub mean_f1: f64,
}

#[derive(Debug, Clone)]
pub struct RlOutcome {
    pub best: PolicyModel,
    pub best_score: f64,
    pub best_timestep: usize,
    pub curve: Vec<CurvePoint>,
    pub last_stats: PpoStats,
}

fn build_envs(questions: &[Question], source: &dyn EmbeddingSource, cap: usize) -> Result<Vec<SummaryEnv>> {
    let mut envs = Vec::with_capacity(questions.len());
    for q in questions {
        let pool = build_candidates(q, cap);
        if pool.is_empty() {
            log::warn!("question {}: no candidate sentences, skipped", q.id);
            continue;
        }
        if q.ideal_answers.iter().all(|a| a.trim().is_empty()) {
            log::warn!("question {}: no ideal answer, skipped", q.id);
            continue;
        }
        envs.push(SummaryEnv::new(q, pool, source)?);
    }
    Ok(envs)
}

/// Run one greedy (majority-vote) episode; returns the summary and reward.
fn play(model: &PolicyModel, env: &mut SummaryEnv, samples: usize, rng: &mut ChaCha8Rng) -> Result<(SummaryResult, f64)> {
    let mut state = env.restart();
    loop {
        let action = eval_action(&model.net, &model.params, &state, samples, rng)?;
        let step = env.advance(action)?;
        if step.done {
            let mut selected = env.selected();
            selected.sort_unstable();
            let pool = env.pool();
            let summary = SummaryResult {
                question_id: env.question_id().to_string(),
                text: selected
                    .iter()
                    .map(|&p| pool[p - 1].text.as_str())
                    .collect::<Vec<_>>()
                    .join(" "),
                n_used: selected.len(),
                selected,
            };
            return Ok((summary, step.reward));
        }
        state = step.state;
    }
}

/// Per-question evaluation stream: independent of evaluation order.
fn eval_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe7a1);
    rng.set_stream(index as u64);
    rng
}

/// Summaries and terminal rewards for each usable question, in input order.
pub fn summarize_with_policy(
    model: &PolicyModel,
    questions: &[Question],
    source: &dyn EmbeddingSource,
    config: &PpoConfig,
) -> Result<Vec<(SummaryResult, f64)>> {
    let envs = build_envs(questions, source, config.candidate_cap)?;
    envs.into_par_iter()
        .enumerate()
        .map(|(i, mut env)| play(model, &mut env, config.eval_samples, &mut eval_rng(config.seed, i)))
        .collect()
}

fn mean_reward(model: &PolicyModel, envs: &[SummaryEnv], config: &PpoConfig) -> Result<f64> {
    let rewards = envs
        .par_iter()
        .enumerate()
        .map(|(i, env)| {
            let mut env = env.clone();
            play(model, &mut env, config.eval_samples, &mut eval_rng(config.seed, i)).map(|r| r.1)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(rewards.iter().sum::<f64>() / rewards.len() as f64)
}

/// Train on `train`, evaluating on `test` every `eval_interval` timesteps
/// and after the last update. The best-scoring parameters are kept.
pub fn rl_train(
    train: &[Question],
    test: &[Question],
    source: &dyn EmbeddingSource,
    config: &PpoConfig,
) -> Result<RlOutcome> {
    config.validate()?;
    let train_envs = build_envs(train, source, config.candidate_cap)?;
    let test_envs = build_envs(test, source, config.candidate_cap)?;
    if train_envs.is_empty() || test_envs.is_empty() {
        return Err(Error::Validation("train and test splits both need usable questions".into()));
    }
    let train_ids: std::collections::HashSet<&str> = train_envs.iter().map(|e| e.question_id()).collect();
    if let Some(shared) = test_envs.iter().find(|e| train_ids.contains(e.question_id())) {
        return Err(Error::Validation(format!(
            "question {} is in both train and test splits",
            shared.question_id()
        )));
    }

    let net = PolicyNet::new(state_dim_for(source.dim()), config.hidden_dim);
    let mut model = PolicyModel {
        net,
        params: net.init_params(config.seed),
    };
    let mut adam = AdamState::new(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut env = QuestionCycle::new(train_envs)?;
    let mut collector = Collector::default();

    let mut curve = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0, model.clone());
    let mut last_stats = PpoStats::default();
    let mut timestep = 0;
    let mut next_eval = config.eval_interval;
    while timestep < config.total_timesteps {
        let rollout = collector.collect(&mut env, &net, &model.params, config.horizon, &mut rng)?;
        timestep += config.horizon;
        let batch = PpoBatch::from_rollout(&rollout, config)?;
        last_stats = ppo_update(&net, &mut model.params, &mut adam, batch, config, &mut rng)?;
        if timestep >= next_eval || timestep >= config.total_timesteps {
            next_eval += config.eval_interval;
            let score = mean_reward(&model, &test_envs, config)?;
            log::info!(
                "timestep {timestep}: test F1 {score:.4}, policy loss {:.4}, value loss {:.4}, entropy {:.3}",
                last_stats.policy_loss,
                last_stats.value_loss,
                last_stats.entropy
            );
            curve.push(CurvePoint {
                timestep,
                mean_f1: score,
            });
            if score > best.0 {
                best = (score, timestep, model.clone());
            }
        }
    }
    Ok(RlOutcome {
        best: best.2,
        best_score: best.0,
        best_timestep: best.1,
        curve,
        last_stats,
    })
}

/// Train on an arbitrary environment for `timesteps` and return the params.
pub fn ppo_train_env<E: Environment>(
    env: &mut E,
    config: &PpoConfig,
    timesteps: usize,
) -> Result<PolicyModel> {
    config.validate()?;
    let net = PolicyNet::new(env.state_dim(), config.hidden_dim);
    let mut params = net.init_params(config.seed);
    let mut adam = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut collector = Collector::default();
    let mut t = 0;
    while t < timesteps {
        let rollout = collector.collect(env, &net, &params, config.horizon, &mut rng)?;
        t += config.horizon;
        let batch = PpoBatch::from_rollout(&rollout, config)?;
        ppo_update(&net, &mut params, &mut adam, batch, config, &mut rng)?;
    }
    Ok(PolicyModel { net, params })
}

const POLICY_META: &str = "qfsum-policy";

#[derive(Serialize, Deserialize)]
struct PolicyMeta {
    kind: String,
    state_dim: usize,
    hidden: usize,
    config: PpoConfig,
}

impl PolicyModel {
    pub fn save<W: std::io::Write>(&self, config: &PpoConfig, out: W) -> Result<()> {
        let meta = PolicyMeta {
            kind: POLICY_META.into(),
            state_dim: self.net.state_dim,
            hidden: self.net.hidden,
            config: config.clone(),
        };
        crate::neural::write_checkpoint(&self.params, &serde_json::to_string(&meta)?, out)
    }

    pub fn load<R: std::io::Read>(input: R) -> Result<(Self, PpoConfig)> {
        let (params, meta) = crate::neural::read_checkpoint(input)?;
        let meta: PolicyMeta = serde_json::from_str(&meta)
            .map_err(|e| Error::parse("policy checkpoint metadata", e.to_string()))?;
        if meta.kind != POLICY_META {
            return Err(Error::Validation(format!("checkpoint holds a {}, not a policy", meta.kind)));
        }
        let net = PolicyNet::new(meta.state_dim, meta.hidden);
        if !net.init_params(0).same_layout(&params) {
            return Err(Error::Validation("policy checkpoint layout does not match its metadata".into()));
        }
        Ok((PolicyModel { net, params }, meta.config))
    }
}
