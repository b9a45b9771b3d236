//! Proximal Policy Optimization for actor-critic MLP genomes.
//!
//! Training works at the timestep level: rollouts of `n_steps` transitions
//! are collected from a persistent environment (which resets every episode
//! boundary), advantages come from GAE with truncation at boundaries, and
//! the clipped-surrogate objective is ascended for several epochs of
//! shuffled minibatches.
//!
//! Gradients are computed by reverse-mode differentiation written for
//! exactly the dense + tanh + Gaussian-head topology family of [`crate::mlp`],
//! which keeps the whole path checkable against finite differences.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{self, EnvConfig, EnvState};
use crate::mlp::{
    self, actor_layout, critic_layout, gaussian_entropy, gaussian_log_prob, log_std_offset,
    LayerShape, MlpGenome, ACT_DIM,
};
use crate::rewards::{self, RewardKind};
use crate::{Error, HingeVector, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Adam with bias correction (the training default).
    Adam,
    /// Plain gradient steps; used where a hand-checkable single step is
    /// wanted.
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub total_timesteps: usize,
    /// Rollout horizon per update.
    pub n_steps: usize,
    pub minibatch_size: usize,
    /// Optimization epochs per rollout.
    pub epochs: usize,
    /// Discount gamma.
    pub gamma: f64,
    /// GAE lambda.
    pub gae_lambda: f64,
    /// Clip range epsilon; `f64::INFINITY` disables clipping.
    pub clip_range: f64,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Global gradient-norm ceiling.
    pub max_grad_norm: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            total_timesteps: 2_000_000,
            n_steps: 2048,
            minibatch_size: 64,
            epochs: 10,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_range: 0.2,
            learning_rate: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma {} not in (0, 1]",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::InvalidConfig(format!(
                "gae_lambda {} not in [0, 1]",
                self.gae_lambda
            )));
        }
        if self.clip_range.is_nan() || self.clip_range <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "clip_range {} must be > 0",
                self.clip_range
            )));
        }
        if self.n_steps == 0
            || self.minibatch_size == 0
            || !self.n_steps.is_multiple_of(self.minibatch_size)
        {
            return Err(Error::InvalidConfig(format!(
                "horizon {} must be a positive multiple of minibatch size {}",
                self.n_steps, self.minibatch_size
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig("learning rate must be >= 0".into()));
        }
        Ok(())
    }
}

/// Timestep-level environment interface for PPO.
pub trait TimestepEnv {
    fn reset(&mut self) -> HingeVector;
    /// Returns (next observation, reward, episode boundary flag).
    fn step(&mut self, action: &HingeVector) -> Result<(HingeVector, f64, bool)>;
}

/// The spider simulator exposed as a timestep stream with resets every
/// episode.
pub struct SpiderTimestepEnv {
    cfg: EnvConfig,
    reward: RewardKind,
    state: EnvState,
    episode_steps: usize,
}

impl SpiderTimestepEnv {
    pub fn new(cfg: EnvConfig, reward: RewardKind) -> Result<Self> {
        let state = env::reset(&cfg)?;
        let episode_steps = cfg.episode_steps();
        Ok(Self {
            cfg,
            reward,
            state,
            episode_steps,
        })
    }
}

impl TimestepEnv for SpiderTimestepEnv {
    fn reset(&mut self) -> HingeVector {
        self.state = env::reset(&self.cfg).expect("config validated at construction");
        self.state.observation()
    }

    fn step(&mut self, action: &HingeVector) -> Result<(HingeVector, f64, bool)> {
        let (next, outputs) = env::env_step(&self.state, action, &self.cfg)?;
        let r = rewards::reward(self.reward, &outputs);
        self.state = next;
        let done = self.state.step_index >= self.episode_steps;
        Ok((self.state.observation(), r, done))
    }
}

/// One-step bandit: reward depends only on the first action coordinate,
/// `-(a0 - target)^2`. Used to check end-to-end policy improvement without
/// the spider dynamics.
pub struct BanditEnv {
    pub target: f64,
}

impl TimestepEnv for BanditEnv {
    fn reset(&mut self) -> HingeVector {
        [0.0; 8]
    }

    fn step(&mut self, action: &HingeVector) -> Result<(HingeVector, f64, bool)> {
        let a = action[0].clamp(-1.0, 1.0);
        Ok(([0.0; 8], -(a - self.target) * (a - self.target), true))
    }
}

/// On-policy transition store for one update.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub obs: Vec<HingeVector>,
    /// Raw (unclamped) Gaussian samples; log-probs refer to these.
    pub actions: Vec<HingeVector>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Episode boundary after step t.
    pub dones: Vec<bool>,
    /// GAE advantages before standardization.
    pub raw_advantages: Vec<f64>,
    /// Standardized advantages used by the update.
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Mean total reward of the episodes completed inside this buffer
    /// (the running partial return when none completed).
    pub mean_episode_reward: f64,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// Backward GAE recursion, truncating at episode boundaries.
    /// `bootstrap_value` is V(next obs) after the final stored step; it is
    /// masked away when that step ended an episode.
    pub fn compute_gae(&mut self, gamma: f64, lambda: f64, bootstrap_value: f64) {
        let n = self.len();
        self.raw_advantages = vec![0.0; n];
        let mut gae = 0.0;
        for t in (0..n).rev() {
            let non_terminal = if self.dones[t] { 0.0 } else { 1.0 };
            let next_value = if t == n - 1 {
                bootstrap_value
            } else {
                self.values[t + 1]
            };
            let delta = self.rewards[t] + gamma * next_value * non_terminal - self.values[t];
            gae = delta + gamma * lambda * non_terminal * gae;
            self.raw_advantages[t] = gae;
        }
        self.returns = self
            .raw_advantages
            .iter()
            .zip(self.values.iter())
            .map(|(a, v)| a + v)
            .collect();
    }

    /// Buffer-wide standardization to mean 0, std 1.
    pub fn standardize_advantages(&mut self) {
        let n = self.raw_advantages.len() as f64;
        let mean = self.raw_advantages.iter().sum::<f64>() / n;
        let var = self
            .raw_advantages
            .iter()
            .map(|a| (a - mean) * (a - mean))
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        self.advantages = self
            .raw_advantages
            .iter()
            .map(|a| (a - mean) / (std + 1e-8))
            .collect();
    }
}

/// Collects `n_steps` transitions with stochastic actions, starting from a
/// fresh episode, and finishes the buffer (GAE + standardization).
/// [`PpoTrainer`] uses the same code path but persists the environment
/// cursor across calls.
pub fn collect_rollout<E: TimestepEnv>(
    genome: &MlpGenome,
    env: &mut E,
    n_steps: usize,
    config: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RolloutBuffer> {
    let mut cursor = RolloutCursor {
        next_obs: env.reset(),
        episode_return: 0.0,
    };
    collect_into(genome, env, n_steps, config, rng, &mut cursor)
}

struct RolloutCursor {
    next_obs: HingeVector,
    episode_return: f64,
}

fn collect_into<E: TimestepEnv>(
    genome: &MlpGenome,
    env: &mut E,
    n_steps: usize,
    config: &PpoConfig,
    rng: &mut ChaCha8Rng,
    cursor: &mut RolloutCursor,
) -> Result<RolloutBuffer> {
    if !genome.arch.actor_critic {
        return Err(Error::NotActorCritic("PPO rollout collection"));
    }
    let mut buf = RolloutBuffer::default();
    let mut completed = Vec::new();
    for _ in 0..n_steps {
        let obs = cursor.next_obs;
        let (clamped, raw, log_prob) = genome.act_stochastic(&obs, rng)?;
        let value = genome.value(&obs)?;
        if !log_prob.is_finite() {
            return Err(Error::NonFinite("log-probability"));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite("value estimate"));
        }
        let (next_obs, reward, done) = env.step(&clamped)?;
        cursor.episode_return += reward;
        buf.obs.push(obs);
        buf.actions.push(raw);
        buf.log_probs.push(log_prob);
        buf.values.push(value);
        buf.rewards.push(reward);
        buf.dones.push(done);
        cursor.next_obs = if done {
            completed.push(cursor.episode_return);
            cursor.episode_return = 0.0;
            env.reset()
        } else {
            next_obs
        };
    }
    let bootstrap = if *buf.dones.last().unwrap_or(&true) {
        0.0
    } else {
        genome.value(&cursor.next_obs)?
    };
    buf.compute_gae(config.gamma, config.gae_lambda, bootstrap);
    buf.standardize_advantages();
    buf.mean_episode_reward = if completed.is_empty() {
        cursor.episode_return
    } else {
        completed.iter().sum::<f64>() / completed.len() as f64
    };
    Ok(buf)
}

/// Scalar diagnostics of one update.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Loss terms of one minibatch, in minimization convention:
/// `total = policy + value_coef * value - entropy_coef * entropy`.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Computes the PPO loss and its gradient over the given buffer rows.
///
/// The gradient is exact reverse-mode differentiation of the minibatch
/// loss except at the measure-zero kinks of min/clip, where the selected
/// branch convention of autograd frameworks is used.
pub fn loss_and_grad(
    genome: &MlpGenome,
    buffer: &RolloutBuffer,
    indices: &[usize],
    config: &PpoConfig,
) -> Result<(LossTerms, Vec<f64>)> {
    if !genome.arch.actor_critic {
        return Err(Error::NotActorCritic("PPO update"));
    }
    let arch = &genome.arch;
    let actor = actor_layout(arch);
    let critic = critic_layout(arch);
    let ls_off = log_std_offset(arch);
    let log_std: Vec<f64> = genome.params[ls_off..ls_off + ACT_DIM].to_vec();
    let batch = indices.len() as f64;
    let eps = config.clip_range;

    let mut grad = vec![0.0; genome.params.len()];
    let mut policy_loss = 0.0;
    let mut value_loss = 0.0;
    let mut clipped = 0usize;
    let mut approx_kl = 0.0;

    let mut actor_cache: Vec<Vec<f64>> = Vec::new();
    let mut critic_cache: Vec<Vec<f64>> = Vec::new();

    for &i in indices {
        let obs = &buffer.obs[i];
        let action = &buffer.actions[i];
        let adv = buffer.advantages[i];
        let ret = buffer.returns[i];
        let old_lp = buffer.log_probs[i];

        let mean = mlp::forward(&genome.params, &actor, obs, Some(&mut actor_cache));
        let value = mlp::forward(&genome.params, &critic, obs, Some(&mut critic_cache))[0];

        let new_lp = gaussian_log_prob(&mean, &log_std, action);
        let ratio = (new_lp - old_lp).exp();
        if !ratio.is_finite() {
            return Err(Error::NonFinite("likelihood ratio"));
        }
        let ratio_clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
        let surr1 = ratio * adv;
        let surr2 = ratio_clipped * adv;
        policy_loss += -surr1.min(surr2) / batch;
        if (ratio - 1.0).abs() > eps {
            clipped += 1;
        }
        approx_kl += (ratio - 1.0 - (new_lp - old_lp)) / batch;

        // d(-min)/d new_lp: gradient flows through the selected branch; the
        // clipped branch has zero slope once saturated
        let clamp_active = surr1 > surr2 && !(1.0 - eps..=1.0 + eps).contains(&ratio);
        let d_lp = if clamp_active {
            0.0
        } else {
            -ratio * adv / batch
        };

        // policy head: d lp / d mean_i and d lp / d log_std_i
        let mut d_mean = [0.0; ACT_DIM];
        for k in 0..ACT_DIM {
            let sigma = log_std[k].exp();
            let z = (action[k] - mean[k]) / sigma;
            d_mean[k] = d_lp * z / sigma;
            grad[ls_off + k] += d_lp * (z * z - 1.0);
        }
        backprop(&genome.params, &actor, &actor_cache, &d_mean, &mut grad);

        // critic: mean squared error against returns
        let v_err = value - ret;
        value_loss += v_err * v_err / batch;
        let d_value = [config.value_coef * 2.0 * v_err / batch];
        backprop(&genome.params, &critic, &critic_cache, &d_value, &mut grad);
    }

    // entropy is state independent: one term, not averaged
    let entropy = gaussian_entropy(&log_std);
    for k in 0..ACT_DIM {
        grad[ls_off + k] -= config.entropy_coef;
    }

    let terms = LossTerms {
        policy: policy_loss,
        value: value_loss,
        entropy,
        total: policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy,
        clip_fraction: clipped as f64 / batch,
        approx_kl,
    };
    Ok((terms, grad))
}

/// Accumulates layer gradients for `d_out = dL/d(network output)` into
/// `grad`, walking the cached activations backwards. `cache[k]` holds the
/// input of layer k (post-activation).
fn backprop(
    params: &[f64],
    layers: &[LayerShape],
    cache: &[Vec<f64>],
    d_out: &[f64],
    grad: &mut [f64],
) {
    let mut delta = d_out.to_vec();
    for k in (0..layers.len()).rev() {
        let layer = &layers[k];
        let input = &cache[k];
        for o in 0..layer.out {
            let d = delta[o];
            let row = layer.weight_off + o * layer.inp;
            for i in 0..layer.inp {
                grad[row + i] += d * input[i];
            }
            grad[layer.bias_off + o] += d;
        }
        if k > 0 {
            let mut prev = vec![0.0; layer.inp];
            for (i, p) in prev.iter_mut().enumerate() {
                let mut acc = 0.0;
                for o in 0..layer.out {
                    acc += params[layer.weight_off + o * layer.inp + i] * delta[o];
                }
                // input was produced by a tanh layer
                *p = acc * (1.0 - input[i] * input[i]);
            }
            delta = prev;
        }
    }
}

/// Adam moment estimates; persists across the whole training run.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Clips `grad` to the global L2 ceiling in place.
fn clip_grad_norm(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
}

/// Runs the epoch/minibatch update loop on `genome` in place.
pub fn ppo_update(
    genome: &mut MlpGenome,
    buffer: &RolloutBuffer,
    config: &PpoConfig,
    adam: &mut AdamState,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    let n = buffer.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    let mut updates = 0usize;
    for _ in 0..config.epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks(config.minibatch_size.min(n)) {
            let (terms, mut grad) = loss_and_grad(genome, buffer, chunk, config)?;
            if !terms.total.is_finite() {
                log::warn!("non-finite PPO loss; minibatch update skipped");
                continue;
            }
            clip_grad_norm(&mut grad, config.max_grad_norm);
            match config.optimizer {
                OptimizerKind::Adam => adam.step(&mut genome.params, &grad, config.learning_rate),
                OptimizerKind::Sgd => {
                    for (p, g) in genome.params.iter_mut().zip(grad.iter()) {
                        *p -= config.learning_rate * g;
                    }
                }
            }
            stats.policy_loss += terms.policy;
            stats.value_loss += terms.value;
            stats.entropy += terms.entropy;
            stats.clip_fraction += terms.clip_fraction;
            stats.approx_kl += terms.approx_kl;
            updates += 1;
        }
    }
    if updates > 0 {
        let k = updates as f64;
        stats.policy_loss /= k;
        stats.value_loss /= k;
        stats.entropy /= k;
        stats.clip_fraction /= k;
        stats.approx_kl /= k;
    }
    Ok(stats)
}

/// Alternates rollout collection and updates against a persistent
/// environment until the timestep budget is consumed.
pub struct PpoTrainer<E: TimestepEnv> {
    pub genome: MlpGenome,
    pub config: PpoConfig,
    env: E,
    rng: ChaCha8Rng,
    adam: AdamState,
    cursor: RolloutCursor,
    timesteps: usize,
}

impl<E: TimestepEnv> PpoTrainer<E> {
    pub fn new(genome: MlpGenome, mut env: E, config: PpoConfig) -> Result<Self> {
        config.validate()?;
        if !genome.arch.actor_critic {
            return Err(Error::NotActorCritic("PPO training"));
        }
        let adam = AdamState::new(genome.params.len());
        let next_obs = env.reset();
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            genome,
            config,
            env,
            rng,
            adam,
            cursor: RolloutCursor {
                next_obs,
                episode_return: 0.0,
            },
            timesteps: 0,
        })
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn remaining(&self) -> usize {
        self.config.total_timesteps.saturating_sub(self.timesteps)
    }

    /// Collects the next rollout (a final partial rollout covers the tail
    /// of the budget) and applies the update. Returns the buffer's mean
    /// episode reward together with the update statistics.
    pub fn step(&mut self) -> Result<(f64, UpdateStats)> {
        let n = self.config.n_steps.min(self.remaining());
        let buffer = collect_into(
            &self.genome,
            &mut self.env,
            n,
            &self.config,
            &mut self.rng,
            &mut self.cursor,
        )?;
        self.timesteps += buffer.len();
        let stats = ppo_update(
            &mut self.genome,
            &buffer,
            &self.config,
            &mut self.adam,
            &mut self.rng,
        )?;
        Ok((buffer.mean_episode_reward, stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::MlpArchitecture;
    use rand::RngExt;

    fn small_genome(seed: u64) -> MlpGenome {
        let arch = MlpArchitecture::new(1, 2, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..arch.param_count())
            .map(|_| rng.random_range(-0.5..0.5))
            .collect();
        MlpGenome::new(arch, params).unwrap()
    }

    fn synthetic_buffer(genome: &MlpGenome, n: usize, seed: u64) -> RolloutBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut buf = RolloutBuffer::default();
        for t in 0..n {
            let obs: HingeVector = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let (_, raw, lp) = genome.act_stochastic(&obs, &mut rng).unwrap();
            buf.obs.push(obs);
            buf.actions.push(raw);
            // perturb stored log-probs so ratios differ from 1
            buf.log_probs.push(lp + rng.random_range(-0.2..0.2));
            buf.values.push(genome.value(&obs).unwrap());
            buf.rewards.push(rng.random_range(-1.0..1.0));
            buf.dones.push((t + 1) % 5 == 0);
        }
        buf.compute_gae(0.99, 0.95, 0.0);
        buf.standardize_advantages();
        buf
    }

    #[test]
    fn gae_hand_unrolled_example() {
        // gamma = 1, lambda = 1, one 3-step episode, unit rewards, zero
        // values: returns must be (3, 2, 1)
        let mut buf = RolloutBuffer {
            obs: vec![[0.0; 8]; 3],
            actions: vec![[0.0; 8]; 3],
            log_probs: vec![0.0; 3],
            values: vec![0.0; 3],
            rewards: vec![1.0; 3],
            dones: vec![false, false, true],
            ..Default::default()
        };
        buf.compute_gae(1.0, 1.0, 123.0); // bootstrap masked by the done flag
        assert_eq!(buf.returns, vec![3.0, 2.0, 1.0]);
        assert_eq!(buf.raw_advantages, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn gae_gamma_zero_is_td_residual() {
        let mut buf = RolloutBuffer {
            obs: vec![[0.0; 8]; 4],
            actions: vec![[0.0; 8]; 4],
            log_probs: vec![0.0; 4],
            values: vec![0.5, -0.25, 1.0, 2.0],
            rewards: vec![1.0, 2.0, 3.0, 4.0],
            dones: vec![false; 4],
            ..Default::default()
        };
        buf.compute_gae(0.0, 0.7, 9.0);
        for t in 0..4 {
            assert!((buf.raw_advantages[t] - (buf.rewards[t] - buf.values[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_zero_rewards_zero_values() {
        let mut buf = RolloutBuffer {
            obs: vec![[0.0; 8]; 6],
            actions: vec![[0.0; 8]; 6],
            log_probs: vec![0.0; 6],
            values: vec![0.0; 6],
            rewards: vec![0.0; 6],
            dones: vec![false, false, true, false, false, true],
            ..Default::default()
        };
        buf.compute_gae(0.99, 0.95, 0.0);
        assert!(buf.raw_advantages.iter().all(|a| *a == 0.0));
        // standardization of an all-zero buffer must not blow up
        buf.standardize_advantages();
        assert!(buf.advantages.iter().all(|a| a.is_finite()));
    }

    #[test]
    fn advantages_standardized_per_buffer() {
        let genome = small_genome(1);
        let buf = synthetic_buffer(&genome, 64, 2);
        let n = buf.advantages.len() as f64;
        let mean = buf.advantages.iter().sum::<f64>() / n;
        let var = buf
            .advantages
            .iter()
            .map(|a| (a - mean) * (a - mean))
            .sum::<f64>()
            / n;
        assert!(mean.abs() < 1e-9);
        assert!((var.sqrt() - 1.0).abs() < 1e-6);
    }

    /// Central finite differences over every parameter of a small policy.
    #[test]
    fn gradient_matches_finite_differences() {
        let genome = small_genome(3);
        let buf = synthetic_buffer(&genome, 16, 4);
        let indices: Vec<usize> = (0..16).collect();
        let config = PpoConfig {
            entropy_coef: 0.01,
            ..PpoConfig::default()
        };
        let (_, grad) = loss_and_grad(&genome, &buf, &indices, &config).unwrap();
        let h = 1e-6;
        let mut max_rel = 0.0f64;
        for p in 0..genome.params.len() {
            let mut plus = genome.clone();
            plus.params[p] += h;
            let mut minus = genome.clone();
            minus.params[p] -= h;
            let (lp, _) = loss_and_grad(&plus, &buf, &indices, &config).unwrap();
            let (lm, _) = loss_and_grad(&minus, &buf, &indices, &config).unwrap();
            let fd = (lp.total - lm.total) / (2.0 * h);
            let denom = fd.abs().max(grad[p].abs()).max(1e-6);
            max_rel = max_rel.max((fd - grad[p]).abs() / denom);
        }
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
    }

    /// With clipping disabled, one full-batch SGD epoch equals the plain
    /// policy-gradient step computed by an independent oracle.
    #[test]
    fn unclipped_update_matches_policy_gradient_oracle() {
        let genome = small_genome(5);
        let buf = synthetic_buffer(&genome, 8, 6);
        let config = PpoConfig {
            clip_range: f64::INFINITY,
            epochs: 1,
            minibatch_size: 8,
            n_steps: 8,
            learning_rate: 1e-2,
            optimizer: OptimizerKind::Sgd,
            entropy_coef: 0.0,
            ..PpoConfig::default()
        };

        // oracle: numerical gradient of the unclipped surrogate objective
        let oracle_loss = |g: &MlpGenome| -> f64 {
            let ls_off = log_std_offset(&g.arch);
            let log_std = &g.params[ls_off..ls_off + 8];
            let mut policy = 0.0;
            let mut value = 0.0;
            for i in 0..8 {
                let mean = g.actor_mean(&buf.obs[i]).unwrap();
                let lp = gaussian_log_prob(&mean, log_std, &buf.actions[i]);
                let ratio = (lp - buf.log_probs[i]).exp();
                policy += -ratio * buf.advantages[i] / 8.0;
                let v = g.value(&buf.obs[i]).unwrap();
                value += (v - buf.returns[i]) * (v - buf.returns[i]) / 8.0;
            }
            policy + config.value_coef * value
        };
        let h = 1e-6;
        let mut oracle_grad = vec![0.0; genome.params.len()];
        for p in 0..genome.params.len() {
            let mut plus = genome.clone();
            plus.params[p] += h;
            let mut minus = genome.clone();
            minus.params[p] -= h;
            oracle_grad[p] = (oracle_loss(&plus) - oracle_loss(&minus)) / (2.0 * h);
        }
        clip_grad_norm(&mut oracle_grad, config.max_grad_norm);
        let expected: Vec<f64> = genome
            .params
            .iter()
            .zip(oracle_grad.iter())
            .map(|(p, g)| p - config.learning_rate * g)
            .collect();

        let mut updated = genome.clone();
        let mut adam = AdamState::new(updated.params.len());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        ppo_update(&mut updated, &buf, &config, &mut adam, &mut rng).unwrap();

        for (u, e) in updated.params.iter().zip(expected.iter()) {
            assert!((u - e).abs() < 1e-8, "updated {u} vs oracle {e}");
        }
    }

    #[test]
    fn zero_learning_rate_leaves_genome_untouched() {
        let genome = small_genome(7);
        let buf = synthetic_buffer(&genome, 32, 8);
        let config = PpoConfig {
            learning_rate: 0.0,
            minibatch_size: 8,
            n_steps: 32,
            ..PpoConfig::default()
        };
        let mut updated = genome.clone();
        let mut adam = AdamState::new(updated.params.len());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        ppo_update(&mut updated, &buf, &config, &mut adam, &mut rng).unwrap();
        assert_eq!(updated.params, genome.params);
    }

    #[test]
    fn clip_fraction_bounds_and_tiny_std_kills_policy_gradient() {
        let mut genome = small_genome(9);
        // freeze log-std very small: resampled == mean, ratio == 1
        let off = log_std_offset(&genome.arch);
        for p in genome.params[off..off + 8].iter_mut() {
            *p = -30.0;
        }
        // actions exactly at the mean, old log-probs exact: ratio = 1
        let mut buf = RolloutBuffer::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..16 {
            let obs: HingeVector = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let mean = genome.actor_mean(&obs).unwrap();
            let lp = gaussian_log_prob(&mean, genome.log_std(), &mean);
            buf.obs.push(obs);
            buf.actions.push(mean);
            buf.log_probs.push(lp);
            buf.values.push(0.0);
            buf.rewards.push(1.0);
            buf.dones.push(false);
        }
        buf.compute_gae(0.99, 0.95, 0.0);
        buf.standardize_advantages();
        let config = PpoConfig {
            value_coef: 0.0,
            ..PpoConfig::default()
        };
        let indices: Vec<usize> = (0..16).collect();
        let (terms, grad) = loss_and_grad(&genome, &buf, &indices, &config).unwrap();
        assert!((0.0..=1.0).contains(&terms.clip_fraction));
        assert_eq!(terms.clip_fraction, 0.0);
        // ratio == 1 for every sample: mean-path gradient must vanish
        let actor = actor_layout(&genome.arch);
        let first = actor[0];
        let mut max_actor_grad = 0.0f64;
        for g in &grad[first.weight_off..first.weight_off + first.out * first.inp] {
            max_actor_grad = max_actor_grad.max(g.abs());
        }
        // policy loss reduces to -mean(adv), constant in the parameters...
        // numerically: d ratio / d mean ~ (a - mu)/sigma^2 with a == mu
        assert!(max_actor_grad < 1e-6, "actor gradient {max_actor_grad}");
    }

    #[test]
    fn entropy_closed_form_in_stats() {
        let genome = small_genome(11);
        let buf = synthetic_buffer(&genome, 8, 12);
        let config = PpoConfig::default();
        let (terms, _) =
            loss_and_grad(&genome, &buf, &(0..8).collect::<Vec<_>>(), &config).unwrap();
        assert!((terms.entropy - gaussian_entropy(genome.log_std())).abs() < 1e-9);
    }

    #[test]
    fn spider_env_resets_every_episode() {
        let cfg = EnvConfig::default();
        let mut env = SpiderTimestepEnv::new(cfg, RewardKind::Speed).unwrap();
        let _ = env.reset();
        let mut dones = 0;
        for t in 0..400 {
            let (_, _, done) = env.step(&[0.1; 8]).unwrap();
            if done {
                dones += 1;
                assert_eq!((t + 1) % 200, 0, "boundary at step {t}");
                let obs = env.reset();
                assert_eq!(obs, [0.0; 8]);
            }
        }
        assert_eq!(dones, 2);
    }

    #[test]
    fn trainer_consumes_exact_timestep_budget() {
        let genome = mlp::init_actor_critic(
            MlpArchitecture::new(0, 0, true).unwrap(),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let config = PpoConfig {
            total_timesteps: 700,
            n_steps: 256,
            minibatch_size: 64,
            epochs: 2,
            ..PpoConfig::default()
        };
        let env = BanditEnv { target: 0.7 };
        let mut trainer = PpoTrainer::new(genome, env, config).unwrap();
        while trainer.remaining() > 0 {
            trainer.step().unwrap();
        }
        assert_eq!(trainer.timesteps(), 700); // final partial rollout of 188
    }

    #[test]
    fn bandit_converges_near_target() {
        let genome = mlp::init_actor_critic(
            MlpArchitecture::new(0, 0, true).unwrap(),
            &mut ChaCha8Rng::seed_from_u64(42),
        )
        .unwrap();
        let config = PpoConfig {
            total_timesteps: 50_000,
            n_steps: 1024,
            minibatch_size: 64,
            epochs: 10,
            seed: 42,
            ..PpoConfig::default()
        };
        let env = BanditEnv { target: 0.7 };
        let mut trainer = PpoTrainer::new(genome, env, config).unwrap();
        while trainer.remaining() > 0 {
            trainer.step().unwrap();
        }
        let action = trainer.genome.act_deterministic(&[0.0; 8]).unwrap();
        assert!(
            (action[0] - 0.7).abs() < 0.05,
            "bandit action {} after 50k steps",
            action[0]
        );
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let make = || {
            let genome = mlp::init_actor_critic(
                MlpArchitecture::new(1, 2, true).unwrap(),
                &mut ChaCha8Rng::seed_from_u64(5),
            )
            .unwrap();
            let config = PpoConfig {
                total_timesteps: 512,
                n_steps: 256,
                minibatch_size: 64,
                epochs: 3,
                seed: 5,
                ..PpoConfig::default()
            };
            let mut trainer = PpoTrainer::new(genome, BanditEnv { target: 0.3 }, config).unwrap();
            while trainer.remaining() > 0 {
                trainer.step().unwrap();
            }
            trainer.genome
        };
        let a = make();
        let b = make();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn non_finite_network_aborts_collection() {
        let mut genome = small_genome(15);
        genome.params[3] = f64::NAN;
        let config = PpoConfig::default();
        let mut env = BanditEnv { target: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(collect_rollout(&genome, &mut env, 8, &config, &mut rng).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        for config in [
            PpoConfig {
                gamma: 0.0,
                ..PpoConfig::default()
            },
            PpoConfig {
                gae_lambda: 1.5,
                ..PpoConfig::default()
            },
            PpoConfig {
                clip_range: 0.0,
                ..PpoConfig::default()
            },
            PpoConfig {
                n_steps: 100,
                minibatch_size: 64,
                ..PpoConfig::default()
            },
        ] {
            assert!(config.validate().is_err(), "{config:?}");
        }
    }
}
