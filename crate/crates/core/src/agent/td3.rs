//! Twin-delayed deep deterministic policy gradient with an optional
//! Q-filtered behavioral-cloning term for self-imitation.

use super::replay::{PrioritizedReplay, Transition};
use super::topk::DemoStore;
use crate::nnet::{AdamState, ForwardCache, Gradients, Mlp, OutputActivation, polyak_update};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Hyperparameters for [`Td3Agent`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Td3Config {
    /// Discount factor.
    pub gamma: f64,
    /// Std-dev of the Gaussian smoothing noise added to target actions.
    pub target_noise_sigma: f64,
    /// Clip bound for the smoothing noise.
    pub target_noise_clip: f64,
    /// Critic updates per actor/target update.
    pub policy_delay: u64,
    /// Std-dev of the exploration noise added by [`Td3Agent::select_action`].
    pub exploration_noise: f64,
    /// Weight of the behavioral-cloning term in the actor loss.
    pub bc_weight: f64,
    /// Minibatch size for both critic and cloning batches.
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Polyak decay for target networks (fraction of the old target kept).
    pub polyak_decay: f64,
    /// Hidden layer widths shared by actor and critics.
    pub hidden: Vec<usize>,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            target_noise_sigma: 0.2,
            target_noise_clip: 0.5,
            policy_delay: 2,
            exploration_noise: 0.1,
            bc_weight: 1.0,
            batch_size: 100,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            polyak_decay: 0.995,
            hidden: vec![128, 64],
        }
    }
}

/// Diagnostics from one [`Td3Agent::update`] call.
#[derive(Debug, Clone, Default)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub mean_abs_td: f64,
    /// Mean online Q1 of the batch under the current policy; only filled on
    /// actor-update steps.
    pub actor_objective: Option<f64>,
    /// Behavioral-cloning loss (sum over passing demo samples).
    pub bc_loss: Option<f64>,
    /// How many demo samples passed the Q-filter.
    pub bc_passed: usize,
}

/// TD3 agent: deterministic actor, twin critics, and their target copies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Td3Agent {
    pub config: Td3Config,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub critic1_target: Mlp,
    pub critic2_target: Mlp,
    pub actor_opt: AdamState,
    pub critic1_opt: AdamState,
    pub critic2_opt: AdamState,
    /// Critic updates performed; actor updates fire every `policy_delay`-th.
    pub critic_updates: u64,
    /// Weighted critic loss of the most recent update (diagnostic only).
    #[serde(default)]
    pub last_critic_loss: f64,
}

fn concat(state: &[f64], action: &[f64]) -> Vec<f64> {
    let mut joined = Vec::with_capacity(state.len() + action.len());
    concat_into(&mut joined, state, action);
    joined
}

fn concat_into(joined: &mut Vec<f64>, state: &[f64], action: &[f64]) {
    joined.clear();
    joined.extend_from_slice(state);
    joined.extend_from_slice(action);
}

impl Td3Agent {
    pub fn new<R: Rng>(obs_dim: usize, action_dim: usize, config: Td3Config, rng: &mut R) -> Self {
        let mut actor_dims = vec![obs_dim];
        actor_dims.extend(&config.hidden);
        actor_dims.push(action_dim);
        let mut critic_dims = vec![obs_dim + action_dim];
        critic_dims.extend(&config.hidden);
        critic_dims.push(1);

        let actor = Mlp::new(&actor_dims, OutputActivation::Tanh, rng);
        let critic1 = Mlp::new(&critic_dims, OutputActivation::Linear, rng);
        let critic2 = Mlp::new(&critic_dims, OutputActivation::Linear, rng);
        let actor_opt = AdamState::new(&actor, config.actor_lr);
        let critic1_opt = AdamState::new(&critic1, config.critic_lr);
        let critic2_opt = AdamState::new(&critic2, config.critic_lr);
        Self {
            obs_dim,
            action_dim,
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            actor_opt,
            critic1_opt,
            critic2_opt,
            critic_updates: 0,
            last_critic_loss: 0.0,
            config,
        }
    }

    /// Policy action in `[-1, 1]^action_dim`; with `explore` set, adds
    /// Gaussian noise and clamps back into range.
    pub fn select_action<R: Rng>(&self, obs: &[f64], explore: bool, rng: &mut R) -> Vec<f64> {
        let mut action = self.actor.forward(obs);
        if explore && self.config.exploration_noise > 0.0 {
            let noise = Normal::new(0.0, self.config.exploration_noise).expect("valid sigma");
            for a in &mut action {
                *a = (*a + noise.sample(rng)).clamp(-1.0, 1.0);
            }
        }
        action
    }

    /// Online Q1 estimate for an arbitrary state/action pair.
    pub fn q1(&self, state: &[f64], action: &[f64]) -> f64 {
        self.critic1.forward(&concat(state, action))[0]
    }

    /// Bootstrap targets `r + gamma * min(Q1', Q2')(s', clamp(pi'(s') + eps))`
    /// with clipped Gaussian smoothing noise; terminal transitions use the
    /// bare reward.
    pub fn compute_targets<R: Rng>(&self, batch: &[&Transition], rng: &mut R) -> Vec<f64> {
        let noise = Normal::new(0.0, 1.0).expect("unit normal");
        let sigma = self.config.target_noise_sigma;
        let clip = self.config.target_noise_clip;
        let mut next_action = Vec::new();
        let mut joined = Vec::new();
        let mut q_out = Vec::new();
        let mut scratch = Vec::new();
        let mut targets = Vec::with_capacity(batch.len());
        for t in batch {
            if t.terminal {
                targets.push(t.reward);
                continue;
            }
            self.actor_target
                .forward_into(&t.next_state, &mut next_action, &mut scratch);
            for a in &mut next_action {
                let eps = (sigma * noise.sample(rng)).clamp(-clip, clip);
                *a = (*a + eps).clamp(-1.0, 1.0);
            }
            concat_into(&mut joined, &t.next_state, &next_action);
            self.critic1_target
                .forward_into(&joined, &mut q_out, &mut scratch);
            let q1 = q_out[0];
            self.critic2_target
                .forward_into(&joined, &mut q_out, &mut scratch);
            let q2 = q_out[0];
            targets.push(t.reward + self.config.gamma * q1.min(q2));
        }
        targets
    }

    /// One importance-weighted regression step of both critics toward
    /// `targets`; returns the absolute TD errors of critic 1 (the priority
    /// signal).
    pub fn critic_update(
        &mut self,
        batch: &[&Transition],
        targets: &[f64],
        weights: &[f64],
    ) -> Vec<f64> {
        debug_assert_eq!(batch.len(), targets.len());
        debug_assert_eq!(batch.len(), weights.len());
        let inv_b = 1.0 / batch.len() as f64;
        let mut g1 = Gradients::zeros_like(&self.critic1);
        let mut g2 = Gradients::zeros_like(&self.critic2);
        let mut abs_td = Vec::with_capacity(batch.len());
        let mut loss = 0.0;
        let mut joined = Vec::new();
        let mut c1 = ForwardCache::default();
        let mut c2 = ForwardCache::default();
        let mut delta = Vec::new();
        let mut scratch = Vec::new();
        for ((t, &y), &w) in batch.iter().zip(targets).zip(weights) {
            concat_into(&mut joined, &t.state, &t.action);
            self.critic1.forward_cached_into(&joined, &mut c1);
            self.critic2.forward_cached_into(&joined, &mut c2);
            let d1 = c1.output()[0] - y;
            let d2 = c2.output()[0] - y;
            loss += w * (d1 * d1 + d2 * d2) * inv_b;
            self.critic1
                .backward_into(&c1, &[2.0 * w * d1 * inv_b], &mut g1, &mut delta, &mut scratch);
            self.critic2
                .backward_into(&c2, &[2.0 * w * d2 * inv_b], &mut g2, &mut delta, &mut scratch);
            abs_td.push(d1.abs());
        }
        self.critic1_opt.apply(&mut self.critic1, &g1);
        self.critic2_opt.apply(&mut self.critic2, &g2);
        self.last_critic_loss = loss;
        abs_td
    }

    /// One actor step maximizing Q1 plus (optionally) minimizing the
    /// Q-filtered cloning loss, followed by Polyak updates of all targets.
    ///
    /// The cloning term only touches demo samples whose stored action the
    /// online critic scores strictly above the policy's action, so when the
    /// filter rejects a whole batch the update is exactly a plain TD3 step.
    pub fn actor_update(
        &mut self,
        batch: &[&Transition],
        demos: Option<&[&Transition]>,
    ) -> (f64, f64, usize) {
        let inv_b = 1.0 / batch.len() as f64;
        let mut actor_grads = Gradients::zeros_like(&self.actor);
        let mut critic_scratch = Gradients::zeros_like(&self.critic1);
        let mut q_sum = 0.0;
        let mut a_cache = ForwardCache::default();
        let mut q_cache = ForwardCache::default();
        let mut joined = Vec::new();
        let mut cdelta = Vec::new();
        let mut cscratch = Vec::new();
        let mut adelta = Vec::new();
        let mut ascratch = Vec::new();
        for t in batch {
            self.actor.forward_cached_into(&t.state, &mut a_cache);
            concat_into(&mut joined, &t.state, a_cache.output());
            self.critic1.forward_cached_into(&joined, &mut q_cache);
            q_sum += q_cache.output()[0];
            // d(-mean Q)/d input, then the action slice of it through the actor.
            self.critic1
                .backward_into(&q_cache, &[-inv_b], &mut critic_scratch, &mut cdelta, &mut cscratch);
            self.actor.backward_into(
                &a_cache,
                &cdelta[self.obs_dim..],
                &mut actor_grads,
                &mut adelta,
                &mut ascratch,
            );
        }

        let mut bc_loss = 0.0;
        let mut bc_passed = 0;
        if let Some(demos) = demos {
            let lambda = self.config.bc_weight;
            let mut q_out = Vec::new();
            for t in demos {
                self.actor.forward_cached_into(&t.state, &mut a_cache);
                concat_into(&mut joined, &t.state, &t.action);
                self.critic1.forward_into(&joined, &mut q_out, &mut cscratch);
                let q_demo = q_out[0];
                concat_into(&mut joined, &t.state, a_cache.output());
                self.critic1.forward_into(&joined, &mut q_out, &mut cscratch);
                let q_policy = q_out[0];
                if q_demo > q_policy {
                    bc_passed += 1;
                    let diff: Vec<f64> = a_cache
                        .output()
                        .iter()
                        .zip(&t.action)
                        .map(|(p, a)| p - a)
                        .collect();
                    bc_loss += diff.iter().map(|d| d * d).sum::<f64>();
                    let upstream: Vec<f64> = diff.iter().map(|d| 2.0 * lambda * d).collect();
                    self.actor
                        .backward_into(&a_cache, &upstream, &mut actor_grads, &mut adelta, &mut ascratch);
                }
            }
        }

        self.actor_opt.apply(&mut self.actor, &actor_grads);
        let decay = self.config.polyak_decay;
        polyak_update(&mut self.actor_target, &self.actor, decay);
        polyak_update(&mut self.critic1_target, &self.critic1, decay);
        polyak_update(&mut self.critic2_target, &self.critic2, decay);
        (q_sum * inv_b, bc_loss, bc_passed)
    }

    /// One full training step: sample the replay buffer, regress the critics,
    /// refresh priorities, and on every `policy_delay`-th call update the
    /// actor (with a demo batch when the store is active) and the targets.
    pub fn update<R: Rng>(
        &mut self,
        replay: &mut PrioritizedReplay,
        demos: Option<&DemoStore>,
        rng: &mut R,
    ) -> UpdateStats {
        let sample = replay.sample(self.config.batch_size, rng);
        let batch: Vec<&Transition> = sample.indices.iter().map(|&i| replay.get(i)).collect();
        let targets = self.compute_targets(&batch, rng);
        let abs_td = self.critic_update(&batch, &targets, &sample.weights);
        self.critic_updates += 1;

        let mut stats = UpdateStats {
            critic_loss: self.last_critic_loss,
            mean_abs_td: abs_td.iter().sum::<f64>() / abs_td.len() as f64,
            ..Default::default()
        };
        if self.critic_updates % self.config.policy_delay == 0 {
            let demo_batch: Option<Vec<&Transition>> = demos
                .filter(|d| d.active())
                .map(|d| d.sample(self.config.batch_size, rng));
            let (q_mean, bc_loss, bc_passed) = self.actor_update(&batch, demo_batch.as_deref());
            stats.actor_objective = Some(q_mean);
            stats.bc_loss = Some(bc_loss);
            stats.bc_passed = bc_passed;
        }
        drop(batch);
        replay.update_priorities(&sample.indices, &abs_td);
        stats
    }
}
