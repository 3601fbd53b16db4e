//! Training orchestration: plan a reference, then loop episodes of
//! exploration, per-episode TD3 update cycles, self-imitation offers,
//! reference replacement, curriculum advancement, periodic evaluation, and
//! checkpointing. Fully deterministic for a fixed seed and resumable from a
//! serialized checkpoint.

use crate::config::{HarnessError, TrainConfig, UpdateCadence};
use crate::metrics::{max_joint_accelerations, rollout_path_length, EpisodeRow, EvalRow, RunMetrics};
use crate::rollout::{eval_battery, EvalPoint};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reftraj_core::agent::{DemoStore, EpisodeRecord, PrioritizedReplay, Td3Agent, Transition};
use reftraj_core::arm::JointVector;
use reftraj_core::env::{Env, ReferenceTrajectory, TaskSpec, Termination};
use reftraj_core::planner::{rrt_plan, shortcut, JointPath};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Priority exponent applied to TD errors in the replay buffer.
pub const PER_ALPHA: f64 = 0.6;
/// Importance-weight exponent for replay sampling.
pub const PER_BETA: f64 = 0.4;
/// Consecutive threshold-clearing evaluations that count as stable success.
pub const STABLE_EVALS: u32 = 3;

/// Plans and smooths a joint-space path for one start/goal pair.
pub fn plan_reference<R: Rng>(
    task: &TaskSpec,
    goal: &JointVector,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<JointPath, HarnessError> {
    let path = rrt_plan(&task.world, &task.start, goal, &config.planner, rng)?;
    Ok(shortcut(&task.world, &path, &config.shortcut, rng))
}

/// End-of-run facts used by experiment aggregation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub ablation: String,
    pub total_steps: u64,
    pub episodes: u64,
    /// Success rate of the last evaluation battery (0 when none ran).
    pub final_success: f64,
    /// Environment-step count at the first of the [`STABLE_EVALS`]
    /// consecutive successful evaluations, if that ever happened.
    pub first_stable_success_step: Option<u64>,
    pub stopped_early: bool,
    /// Mean return over the last tenth of episodes.
    pub tail_mean_return: f64,
}

/// The whole training state; serializing it is the checkpoint format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trainer {
    pub config: TrainConfig,
    pub seed: u64,
    pub env: Env,
    pub agent: Td3Agent,
    pub replay: PrioritizedReplay,
    pub demos: DemoStore,
    pub rng: ChaCha8Rng,
    pub metrics: RunMetrics,
    pub total_steps: u64,
    pub episodes: u64,
    /// Fixed evaluation starts chosen from the initial reference.
    pub eval_points: Vec<EvalPoint>,
    pub consecutive_successes: u32,
    pub streak_start_step: Option<u64>,
    pub first_stable_success_step: Option<u64>,
    pub stopped_early: bool,
    samples_since_update: u64,
}

impl Trainer {
    /// Single-goal training: resolves the task, plans the reference, and
    /// wires the agent. Consumes the shared RNG so the whole run replays
    /// from the seed alone.
    pub fn new(config: TrainConfig, seed: u64) -> Result<Self, HarnessError> {
        config.validate()?;
        let mut task = config.task.resolve()?;
        apply_ablation(&mut task, &config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let smoothed = plan_reference(&task, &task.goal.clone(), &config, &mut rng)?;
        let reference = ReferenceTrajectory::from_path(smoothed, task.resample_interval);
        let env = Env::new(task, reference);
        let demos = DemoStore::single(config.topk);
        Ok(Self::from_parts(config, env, demos, rng, seed))
    }

    /// Goal-set training: one reference and one demonstration buffer per
    /// goal, goal-conditioned observations.
    pub fn with_goal_set(
        config: TrainConfig,
        mut task: TaskSpec,
        goals: Vec<JointVector>,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        config.validate()?;
        apply_ablation(&mut task, &config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut references = Vec::with_capacity(goals.len());
        for goal in &goals {
            let smoothed = plan_reference(&task, goal, &config, &mut rng)?;
            references.push(ReferenceTrajectory::from_path(
                smoothed,
                task.resample_interval,
            ));
        }
        let demos = DemoStore::per_goal(goals.len(), config.per_goal_topk);
        let env = Env::with_goal_set(task, goals, references, true);
        Ok(Self::from_parts(config, env, demos, rng, seed))
    }

    fn from_parts(
        config: TrainConfig,
        env: Env,
        demos: DemoStore,
        mut rng: ChaCha8Rng,
        seed: u64,
    ) -> Self {
        let agent = Td3Agent::new(env.obs_dim(), env.action_dim(), config.agent.clone(), &mut rng);
        let replay = PrioritizedReplay::new(config.replay_capacity, PER_ALPHA, PER_BETA);
        let eval_points = battery_points(&env, config.eval_reference_starts);
        Self {
            config,
            seed,
            env,
            agent,
            replay,
            demos,
            rng,
            metrics: RunMetrics::default(),
            total_steps: 0,
            episodes: 0,
            eval_points,
            consecutive_successes: 0,
            streak_start_step: None,
            first_stable_success_step: None,
            stopped_early: false,
            samples_since_update: 0,
        }
    }

    /// Serializes the full state (checkpoint).
    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let bytes =
            bincode::serialize(self).map_err(|e| HarnessError::Other(e.to_string()))?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    /// Restores a checkpoint; `run` continues exactly where it left off.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let bytes = std::fs::read(path)?;
        bincode::deserialize(&bytes).map_err(|e| HarnessError::Other(e.to_string()))
    }

    /// Runs episodes until the step budget is exhausted or early stopping
    /// fires.
    pub fn run(&mut self) -> Result<TrainSummary, HarnessError> {
        while self.total_steps < self.config.budget && !self.stopped_early {
            self.run_episode()?;
        }
        Ok(self.summary())
    }

    pub fn summary(&self) -> TrainSummary {
        TrainSummary {
            seed: self.seed,
            ablation: self.config.ablation.label(),
            total_steps: self.total_steps,
            episodes: self.episodes,
            final_success: self.metrics.evals.last().map_or(0.0, |r| r.success_rate),
            first_stable_success_step: self.first_stable_success_step,
            stopped_early: self.stopped_early,
            tail_mean_return: self.metrics.tail_mean_return(0.1),
        }
    }

    /// Collects one episode, then runs the update cycle and the end-of-episode
    /// bookkeeping. An episode cut short by the step budget is recorded but
    /// triggers no updates or bookkeeping.
    fn run_episode(&mut self) -> Result<(), HarnessError> {
        let goal_count = self.env.goals.len();
        if goal_count > 1 {
            let goal = self.rng.gen_range(0..goal_count);
            self.env.set_active_goal(goal);
        }
        let mut obs = self.env.reset(&mut self.rng);
        let goal_radius = self.env.curriculum.goal_radius();
        let collision_weight = self
            .env
            .curriculum
            .collision_weight(self.env.task.weights.collision);

        let mut transitions: Vec<Transition> = Vec::new();
        let mut total_reward = 0.0;
        let mut collided = false;
        let mut completed = false;
        let mut reached = false;
        loop {
            // Uniform random actions until the warmup fill is reached (the
            // first updates then see decorrelated coverage, not a single
            // policy's narrow tube), standard TD3 start-up practice.
            let action = if self.replay.len() < self.config.warmup {
                (0..self.env.action_dim())
                    .map(|_| self.rng.gen_range(-1.0..1.0))
                    .collect()
            } else {
                self.agent.select_action(&obs, true, &mut self.rng)
            };
            let result = self.env.step(&action);
            let transition = Transition {
                state: obs,
                action,
                reward: result.reward,
                next_state: result.observation.clone(),
                // Timeouts bootstrap; only reaching the goal is terminal.
                terminal: result.termination == Some(Termination::Goal),
            };
            self.replay.push(transition.clone());
            transitions.push(transition);
            total_reward += result.reward;
            collided |= result.flags.collided;
            obs = result.observation;
            self.total_steps += 1;

            if let UpdateCadence::EverySamples(n) = self.config.cadence {
                self.samples_since_update += 1;
                if self.samples_since_update >= n {
                    self.samples_since_update = 0;
                    self.update_cycle(n as usize)?;
                }
            }
            if let Some(termination) = result.termination {
                completed = true;
                reached = termination == Termination::Goal;
                break;
            }
            if self.total_steps >= self.config.budget {
                break;
            }
        }

        let steps = transitions.len();
        let goal_id = self.env.active_goal;
        if completed {
            let record = EpisodeRecord {
                transitions,
                reached_goal: reached,
                had_collision: collided,
                steps,
                total_reward,
                goal_id,
            };
            if !self.config.ablation.no_self_imitation {
                self.demos.offer(record.clone());
            }
            if self.config.cadence == UpdateCadence::PerEpisode {
                self.update_cycle(steps)?;
            }
            if !self.config.ablation.no_reference_update {
                let start = self.env.task.start.clone();
                let interval = self.env.task.resample_interval;
                self.env.references[goal_id].maybe_replace(&record, &start, interval);
            }
            if reached {
                self.env.curriculum.on_goal_reached();
            }
        }

        self.metrics.episodes.push(EpisodeRow {
            episode: self.episodes,
            total_steps: self.total_steps,
            steps,
            reward: total_reward,
            reached_goal: reached,
            collided,
            goal_radius,
            collision_weight,
        });
        self.episodes += 1;

        if completed {
            if self.episodes % self.config.eval_every_episodes == 0 {
                self.run_eval();
            }
            if let (Some(every), Some(path)) = (
                self.config.checkpoint_every_episodes,
                self.config.checkpoint_path.clone(),
            ) {
                if self.episodes % every == 0 {
                    self.save(&path)?;
                }
            }
        }
        Ok(())
    }

    /// Runs `steps` gradient updates once the warmup fill is reached.
    fn update_cycle(&mut self, steps: usize) -> Result<(), HarnessError> {
        if self.replay.len() < self.config.warmup {
            return Ok(());
        }
        let demos = if self.config.ablation.no_self_imitation {
            None
        } else {
            Some(&self.demos)
        };
        for _ in 0..steps {
            let stats = self.agent.update(&mut self.replay, demos, &mut self.rng);
            let finite = stats.critic_loss.is_finite()
                && stats.mean_abs_td.is_finite()
                && stats.actor_objective.map_or(true, f64::is_finite)
                && stats.bc_loss.map_or(true, f64::is_finite);
            if !finite {
                return Err(self.divergence(format!(
                    "non-finite update statistics: critic loss {}, |TD| {}, actor {:?}",
                    stats.critic_loss, stats.mean_abs_td, stats.actor_objective
                )));
            }
        }
        Ok(())
    }

    /// Dumps the state next to the configured checkpoint (when any) and
    /// builds the divergence error.
    fn divergence(&self, detail: String) -> HarnessError {
        if let Some(path) = &self.config.checkpoint_path {
            let dump = path.with_extension("dump.ckpt");
            let _ = self.save(&dump);
        }
        HarnessError::Divergence {
            step: self.total_steps,
            detail,
        }
    }

    fn run_eval(&mut self) {
        let battery = eval_battery(&self.env, &self.agent, &self.eval_points);
        let dt = self.env.task.dt;
        let from_start = &battery.records[0];
        if self.config.verbose {
            eprintln!(
                "[seed {}] step {:>8} episode {:>5}: eval success {:>4.2}, from-start steps {}",
                self.seed, self.total_steps, self.episodes, battery.success_rate, from_start.steps
            );
        }
        self.metrics.evals.push(EvalRow {
            total_steps: self.total_steps,
            success_rate: battery.success_rate,
            from_start_reached: from_start.reached_goal && !from_start.had_collision,
            from_start_steps: from_start.steps,
            time_to_goal_s: from_start.steps as f64 * dt,
            path_length: rollout_path_length(&from_start.points),
            max_accel: max_joint_accelerations(&from_start.points, dt),
        });

        if battery.success_rate >= self.config.success_threshold {
            if self.consecutive_successes == 0 {
                self.streak_start_step = Some(self.total_steps);
            }
            self.consecutive_successes += 1;
            if self.consecutive_successes >= STABLE_EVALS {
                if self.first_stable_success_step.is_none() {
                    self.first_stable_success_step = self.streak_start_step;
                }
                if self.config.early_stop {
                    self.stopped_early = true;
                }
            }
        } else {
            self.consecutive_successes = 0;
            self.streak_start_step = None;
        }
    }
}

fn apply_ablation(task: &mut TaskSpec, config: &TrainConfig) {
    if config.ablation.no_reference {
        task.weights.path_distance = 0.0;
        task.weights.path_progress = 0.0;
    }
    if config.ablation.no_curriculum {
        task.curriculum.enabled = false;
    }
}

/// The task start plus evenly spaced vertices of the initial reference (one
/// goal), or one from-start rollout per goal (goal sets).
fn battery_points(env: &Env, reference_starts: usize) -> Vec<EvalPoint> {
    if env.goals.len() > 1 {
        return (0..env.goals.len())
            .map(|goal| EvalPoint {
                start: env.task.start.clone(),
                goal,
            })
            .collect();
    }
    let mut points = vec![EvalPoint {
        start: env.task.start.clone(),
        goal: 0,
    }];
    let vertices = &env.references[0].resampled.vertices;
    if vertices.len() > 1 {
        for i in 1..=reference_starts {
            let index = i * (vertices.len() - 1) / (reference_starts + 1);
            points.push(EvalPoint {
                start: vertices[index].clone(),
                goal: 0,
            });
        }
    }
    points
}
