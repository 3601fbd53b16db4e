//! Training environment: shaped reward, curriculum, reference trajectory, and
//! the discrete-time velocity-command dynamics shared by agent and baseline.

mod pid;

pub use pid::{run_pid, PidGains, RolloutRecord, TimedPoint};

use crate::agent::EpisodeRecord;
use crate::arm::{ArmError, ArmState, JointVector, WorldModel, WorldFile};
use crate::planner::{resample_path, JointPath};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Arm(#[from] ArmError),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse task file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid task: {0}")]
    Invalid(String),
}

/// Weights of the shaped reward. The per-step reward is
///
/// `r = goal_distance * d_goal + goal_bonus * [goal] + collision * [hit]
///    + joint_limit * [limit] + acceleration * |dv|/dt + step_cost
///    + path_distance * d_ref + path_progress * (nni_t - nni_prev)`
///
/// where `d_ref` is the divergence of the last motion segment from the
/// resampled reference and `nni` the nearest reference-vertex index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    /// Penalty per radian of distance to the goal.
    pub goal_distance: f64,
    /// One-time bonus when the goal radius is entered.
    pub goal_bonus: f64,
    /// Final collision penalty; the curriculum ramps from zero to this.
    pub collision: f64,
    /// Penalty when a commanded step leaves the joint limits.
    pub joint_limit: f64,
    /// Penalty per rad/s^2 of commanded acceleration magnitude.
    pub acceleration: f64,
    /// Constant per-step cost.
    pub step_cost: f64,
    /// Penalty per radian of divergence from the reference.
    pub path_distance: f64,
    /// Bonus per reference vertex advanced.
    pub path_progress: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            goal_distance: -0.5,
            goal_bonus: 50.0,
            collision: -10.0,
            joint_limit: -5.0,
            acceleration: -0.001,
            step_cost: -0.1,
            path_distance: -1.0,
            path_progress: 0.5,
        }
    }
}

/// Curriculum schedule driven by the number of goal-reached episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumConfig {
    /// When false the schedule is pinned at its mature endpoint.
    pub enabled: bool,
    /// Goal radius at the start of training, radians.
    pub goal_radius_start: f64,
    /// Goal radius after the shrink phase, radians.
    pub goal_radius_final: f64,
    /// Goal-reached episodes over which the radius shrinks linearly.
    pub shrink_episodes: u64,
    /// Further goal-reached episodes over which the collision penalty ramps
    /// from zero to its configured weight.
    pub penalty_ramp_episodes: u64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            goal_radius_start: 0.52,
            goal_radius_final: 0.26,
            shrink_episodes: 100,
            penalty_ramp_episodes: 100,
        }
    }
}

/// Progress through the curriculum: counts goal-reached episodes and derives
/// the current goal radius, collision weight, and whether collisions are
/// checked at all (they are ignored during the radius-shrink phase).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Curriculum {
    pub config: CurriculumConfig,
    pub goals_reached: u64,
}

impl Curriculum {
    pub fn new(config: CurriculumConfig) -> Self {
        Self {
            config,
            goals_reached: 0,
        }
    }

    /// A curriculum past both phases: final radius, full penalty, checking on.
    pub fn mature(config: CurriculumConfig) -> Self {
        let goals_reached = config.shrink_episodes + config.penalty_ramp_episodes;
        Self {
            config,
            goals_reached,
        }
    }

    pub fn on_goal_reached(&mut self) {
        self.goals_reached += 1;
    }

    pub fn goal_radius(&self) -> f64 {
        let c = &self.config;
        if !c.enabled || self.goals_reached >= c.shrink_episodes {
            return c.goal_radius_final;
        }
        let frac = self.goals_reached as f64 / c.shrink_episodes as f64;
        c.goal_radius_start - (c.goal_radius_start - c.goal_radius_final) * frac
    }

    /// Current collision weight given the configured final weight.
    pub fn collision_weight(&self, final_weight: f64) -> f64 {
        let c = &self.config;
        if !c.enabled {
            return final_weight;
        }
        if self.goals_reached < c.shrink_episodes {
            return 0.0;
        }
        let ramped = self.goals_reached - c.shrink_episodes;
        if ramped >= c.penalty_ramp_episodes {
            final_weight
        } else {
            final_weight * ramped as f64 / c.penalty_ramp_episodes as f64
        }
    }

    /// Collisions are only detected once the radius-shrink phase is over.
    pub fn collision_checking_enabled(&self) -> bool {
        !self.config.enabled || self.goals_reached >= self.config.shrink_episodes
    }
}

/// Fully resolved task: world, endpoints, dynamics, and reward settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub world: WorldModel,
    pub start: JointVector,
    pub goal: JointVector,
    /// Control period, seconds.
    pub dt: f64,
    /// Episode step limit.
    pub max_steps: usize,
    /// Probability that an episode starts on the reference instead of at
    /// `start`.
    pub p_reset: f64,
    pub weights: RewardWeights,
    pub curriculum: CurriculumConfig,
    /// Reference resampling interval and segment sampling spacing, radians.
    pub resample_interval: f64,
}

impl TaskSpec {
    pub fn dof(&self) -> usize {
        self.world.chain.dof()
    }

    /// Per-joint velocity scales: action `[-1, 1]` maps to `+/- max_speed`.
    pub fn action_scale(&self) -> Vec<f64> {
        self.world.chain.max_speeds()
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.world.validate()?;
        self.world.chain.check_dims(&self.start)?;
        self.world.chain.check_dims(&self.goal)?;
        if self.world.chain.check_joint_limits(&self.start) {
            return Err(EnvError::Invalid("start outside joint limits".into()));
        }
        if self.world.chain.check_joint_limits(&self.goal) {
            return Err(EnvError::Invalid("goal outside joint limits".into()));
        }
        if self.world.check_collision(&self.start) {
            return Err(EnvError::Invalid("start in collision".into()));
        }
        if self.world.check_collision(&self.goal) {
            return Err(EnvError::Invalid("goal in collision".into()));
        }
        if !(self.dt > 0.0) {
            return Err(EnvError::Invalid("dt must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.p_reset) {
            return Err(EnvError::Invalid("p_reset must be in [0, 1]".into()));
        }
        if !(self.resample_interval > 0.0) {
            return Err(EnvError::Invalid("resample_interval must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(EnvError::Invalid("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// On-disk task description; the world lives in its own file referenced
/// relative to the task file. Angles are degrees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskFile {
    pub world_file: String,
    pub theta_start_deg: Vec<f64>,
    pub theta_goal_deg: Vec<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_p_reset")]
    pub p_reset: f64,
    #[serde(default)]
    pub reward_weights: RewardWeights,
    #[serde(default)]
    pub curriculum: CurriculumConfig,
    #[serde(default = "default_resample_interval")]
    pub resample_interval_rad: f64,
}

fn default_dt() -> f64 {
    0.0035
}
fn default_max_steps() -> usize {
    300
}
fn default_p_reset() -> f64 {
    0.3
}
fn default_resample_interval() -> f64 {
    0.05
}

impl TaskFile {
    /// Reads a task file and its world file (resolved against the task
    /// file's directory) into a validated [`TaskSpec`].
    pub fn load(path: &Path) -> Result<TaskSpec, EnvError> {
        let text = std::fs::read_to_string(path).map_err(|source| EnvError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: TaskFile = serde_json::from_str(&text)?;
        let world_path = path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&file.world_file);
        let world_text = std::fs::read_to_string(&world_path).map_err(|source| EnvError::Io {
            path: world_path.display().to_string(),
            source,
        })?;
        let world = WorldFile::parse(&world_text)?;
        file.into_spec(world)
    }

    pub fn into_spec(self, world: WorldModel) -> Result<TaskSpec, EnvError> {
        let spec = TaskSpec {
            world,
            start: JointVector::from_degrees(&self.theta_start_deg),
            goal: JointVector::from_degrees(&self.theta_goal_deg),
            dt: self.dt,
            max_steps: self.max_steps,
            p_reset: self.p_reset,
            weights: self.reward_weights,
            curriculum: self.curriculum,
            resample_interval: self.resample_interval_rad,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Index of the reference vertex closest to `q`; ties break to the smaller
/// index.
pub fn nearest_reference_index(q: &JointVector, vertices: &[JointVector]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, v) in vertices.iter().enumerate() {
        let d = q.distance(v);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Divergence of the motion segment `a -> b` from the reference: the maximum,
/// over segment samples spaced at most `interval` apart (endpoints included),
/// of the distance to the nearest reference vertex.
pub fn path_divergence(
    a: &JointVector,
    b: &JointVector,
    vertices: &[JointVector],
    interval: f64,
) -> f64 {
    debug_assert!(interval > 0.0);
    let steps = (a.distance(b) / interval).ceil().max(1.0) as usize;
    let mut worst: f64 = 0.0;
    for k in 0..=steps {
        let sample = a.lerp(b, k as f64 / steps as f64);
        let mut nearest = f64::INFINITY;
        for v in vertices {
            let d = sample.distance(v);
            if d < nearest {
                nearest = d;
            }
        }
        worst = worst.max(nearest);
    }
    worst
}

/// The reference path the reward shapes toward, kept both as planned (raw
/// waypoints) and resampled at the task interval. Records the quality of the
/// episode that produced it so replacements must strictly improve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub raw: JointPath,
    pub resampled: JointPath,
    /// Steps of the producing episode; planner output counts as worst-case.
    pub source_steps: usize,
    pub source_reward: f64,
}

impl ReferenceTrajectory {
    pub fn from_path(raw: JointPath, interval: f64) -> Self {
        let resampled = resample_path(&raw, interval);
        Self {
            raw,
            resampled,
            source_steps: usize::MAX,
            source_reward: f64::NEG_INFINITY,
        }
    }

    /// Replaces the reference with the episode's visited path when the episode
    /// reached the goal collision-free from the task start and is strictly
    /// better: fewer steps, or equal steps with higher return. Returns true
    /// on replacement.
    pub fn maybe_replace(
        &mut self,
        episode: &EpisodeRecord,
        task_start: &JointVector,
        interval: f64,
    ) -> bool {
        if !episode.qualifies() {
            return false;
        }
        let dof = task_start.len();
        match episode.start_angles(dof) {
            Some(start) if start.distance(task_start) < 1e-9 => {}
            _ => return false,
        }
        let better = episode.steps < self.source_steps
            || (episode.steps == self.source_steps && episode.total_reward > self.source_reward);
        if !better {
            return false;
        }
        let raw = episode.joint_path(dof);
        self.resampled = resample_path(&raw, interval);
        self.raw = raw;
        self.source_steps = episode.steps;
        self.source_reward = episode.total_reward;
        true
    }
}

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Goal,
    Timeout,
}

/// Per-step event flags and shaping diagnostics.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepFlags {
    pub reached_goal: bool,
    pub collided: bool,
    pub limit_violation: bool,
    pub goal_distance: f64,
    pub reference_divergence: f64,
    pub reference_progress: i64,
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub flags: StepFlags,
    pub termination: Option<Termination>,
}

/// Episode state machine. Owns the task, curriculum, goal set, and one
/// reference trajectory per goal so the whole training context serializes
/// into checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Env {
    pub task: TaskSpec,
    pub curriculum: Curriculum,
    pub goals: Vec<JointVector>,
    pub references: Vec<ReferenceTrajectory>,
    /// Goal the current episode is conditioned on.
    pub active_goal: usize,
    /// Whether observations carry the goal angles (goal-set training).
    pub goal_conditioned: bool,
    state: ArmState,
    prev_commanded: JointVector,
    prev_nearest: usize,
    steps: usize,
    started_at_task_start: bool,
    episode_open: bool,
}

impl Env {
    pub fn new(task: TaskSpec, reference: ReferenceTrajectory) -> Self {
        let goal = task.goal.clone();
        Self::with_goal_set(task, vec![goal], vec![reference], false)
    }

    /// Environment over a set of goals, each with its own reference; the
    /// observation is extended with the active goal's angles.
    pub fn with_goal_set(
        task: TaskSpec,
        goals: Vec<JointVector>,
        references: Vec<ReferenceTrajectory>,
        goal_conditioned: bool,
    ) -> Self {
        assert_eq!(goals.len(), references.len());
        assert!(!goals.is_empty());
        let dof = task.dof();
        let curriculum = Curriculum::new(task.curriculum);
        let start = task.start.clone();
        Self {
            task,
            curriculum,
            goals,
            references,
            active_goal: 0,
            goal_conditioned,
            state: ArmState::at_rest(start),
            prev_commanded: JointVector::zeros(dof),
            prev_nearest: 0,
            steps: 0,
            started_at_task_start: true,
            episode_open: false,
        }
    }

    pub fn dof(&self) -> usize {
        self.task.dof()
    }

    pub fn action_dim(&self) -> usize {
        self.dof()
    }

    pub fn obs_dim(&self) -> usize {
        if self.goal_conditioned {
            3 * self.dof()
        } else {
            2 * self.dof()
        }
    }

    pub fn state(&self) -> &ArmState {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn goal(&self) -> &JointVector {
        &self.goals[self.active_goal]
    }

    pub fn reference(&self) -> &ReferenceTrajectory {
        &self.references[self.active_goal]
    }

    pub fn reference_mut(&mut self) -> &mut ReferenceTrajectory {
        &mut self.references[self.active_goal]
    }

    pub fn set_active_goal(&mut self, goal: usize) {
        assert!(goal < self.goals.len());
        self.active_goal = goal;
    }

    /// Whether the running episode began at the task start configuration
    /// (as opposed to a reset onto the reference).
    pub fn started_at_task_start(&self) -> bool {
        self.started_at_task_start
    }

    pub fn observe(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.obs_dim());
        obs.extend_from_slice(self.state.angles.as_slice());
        obs.extend_from_slice(self.state.velocities.as_slice());
        if self.goal_conditioned {
            obs.extend_from_slice(self.goal().as_slice());
        }
        obs
    }

    /// Starts an episode: with probability `p_reset` from a uniformly chosen
    /// vertex of the active resampled reference (at rest), otherwise from the
    /// task start. Returns the initial observation.
    pub fn reset<R: Rng>(&mut self, rng: &mut R) -> Vec<f64> {
        let on_reference = self.task.p_reset > 0.0 && rng.gen::<f64>() < self.task.p_reset;
        let angles = if on_reference {
            let verts = &self.references[self.active_goal].resampled.vertices;
            verts[rng.gen_range(0..verts.len())].clone()
        } else {
            self.task.start.clone()
        };
        // reset_to classifies by value, so drawing the reference vertex that
        // coincides with the start still counts as a start episode.
        self.reset_to(angles);
        self.observe()
    }

    /// Starts an episode from an explicit configuration at rest (used by
    /// deterministic evaluation).
    pub fn reset_to(&mut self, angles: JointVector) {
        let dof = self.dof();
        self.started_at_task_start = angles.distance(&self.task.start) < 1e-9;
        self.state = ArmState::at_rest(angles);
        self.prev_commanded = JointVector::zeros(dof);
        self.prev_nearest = nearest_reference_index(
            &self.state.angles,
            &self.references[self.active_goal].resampled.vertices,
        );
        self.steps = 0;
        self.episode_open = true;
    }

    /// Advances one control period with a normalized action in `[-1, 1]^n`.
    ///
    /// Dynamics: commanded velocity `v = action * max_speed`, then
    /// `theta += v * dt` clamped to the joint limits (clamping zeroes nothing;
    /// the limit penalty flags the violation instead).
    pub fn step(&mut self, action: &[f64]) -> StepResult {
        assert!(self.episode_open, "step called before reset");
        assert_eq!(action.len(), self.action_dim());
        let task = &self.task;
        let scale = task.action_scale();
        let dof = task.dof();

        let commanded = JointVector::new(
            action
                .iter()
                .zip(&scale)
                .map(|(a, s)| a.clamp(-1.0, 1.0) * s)
                .collect(),
        );
        let previous_angles = self.state.angles.clone();
        let mut next_angles = JointVector::new(
            previous_angles
                .as_slice()
                .iter()
                .zip(commanded.as_slice())
                .map(|(t, v)| t + v * task.dt)
                .collect(),
        );
        let limit_violation = task.world.chain.check_joint_limits(&next_angles);
        task.world.chain.clamp_to_limits(&mut next_angles);

        let goal = &self.goals[self.active_goal];
        let goal_distance = next_angles.distance(goal);
        let reached_goal = goal_distance <= self.curriculum.goal_radius();
        let collided = self.curriculum.collision_checking_enabled()
            && task.world.check_collision(&next_angles);

        let accel = commanded
            .as_slice()
            .iter()
            .zip(self.prev_commanded.as_slice())
            .map(|(v, p)| (v - p) * (v - p))
            .sum::<f64>()
            .sqrt()
            / task.dt;

        let w = &task.weights;
        let mut reward = w.goal_distance * goal_distance
            + w.step_cost
            + w.acceleration * accel;
        if reached_goal {
            reward += w.goal_bonus;
        }
        if collided {
            reward += self.curriculum.collision_weight(w.collision);
        }
        if limit_violation {
            reward += w.joint_limit;
        }

        let reference = &self.references[self.active_goal].resampled.vertices;
        let divergence = path_divergence(
            &previous_angles,
            &next_angles,
            reference,
            task.resample_interval,
        );
        let nearest = nearest_reference_index(&next_angles, reference);
        let progress = nearest as i64 - self.prev_nearest as i64;
        reward += w.path_distance * divergence + w.path_progress * progress as f64;

        self.state = ArmState {
            angles: next_angles,
            velocities: commanded.clone(),
        };
        self.prev_commanded = commanded;
        self.prev_nearest = nearest;
        self.steps += 1;
        debug_assert_eq!(self.state.angles.len(), dof);

        let termination = if reached_goal {
            Some(Termination::Goal)
        } else if self.steps >= task.max_steps {
            Some(Termination::Timeout)
        } else {
            None
        };
        if termination.is_some() {
            self.episode_open = false;
        }

        StepResult {
            observation: self.observe(),
            reward,
            flags: StepFlags {
                reached_goal,
                collided,
                limit_violation,
                goal_distance,
                reference_divergence: divergence,
                reference_progress: progress,
            },
            termination,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::{CollisionSphere, Joint, KinematicChain};
    use nalgebra::Vector3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_joint_task(obstacles: Vec<crate::arm::BoxObstacle>) -> TaskSpec {
        let chain = KinematicChain {
            joints: vec![Joint {
                axis: Vector3::z_axis(),
                offset: Vector3::new(0.5, 0.0, 0.0),
                min: -3.0,
                max: 3.0,
                max_speed: 2.0,
            }],
            spheres: vec![CollisionSphere {
                link: 0,
                offset: Vector3::zeros(),
                radius: 0.05,
            }],
        };
        TaskSpec {
            world: WorldModel {
                name: "line".into(),
                chain,
                obstacles,
            },
            start: JointVector::new(vec![0.0]),
            goal: JointVector::new(vec![2.0]),
            dt: 0.1,
            max_steps: 50,
            p_reset: 0.3,
            weights: RewardWeights::default(),
            curriculum: CurriculumConfig::default(),
            resample_interval: 0.05,
        }
    }

    fn straight_reference(task: &TaskSpec) -> ReferenceTrajectory {
        ReferenceTrajectory::from_path(
            JointPath::new(vec![task.start.clone(), task.goal.clone()]),
            task.resample_interval,
        )
    }

    #[test]
    fn curriculum_schedule_endpoints() {
        let mut c = Curriculum::new(CurriculumConfig::default());
        assert_eq!(c.goal_radius(), 0.52);
        assert_eq!(c.collision_weight(-10.0), 0.0);
        assert!(!c.collision_checking_enabled());
        c.goals_reached = 50;
        assert!((c.goal_radius() - 0.39).abs() < 1e-12);
        assert_eq!(c.collision_weight(-10.0), 0.0);
        c.goals_reached = 100;
        assert_eq!(c.goal_radius(), 0.26);
        assert_eq!(c.collision_weight(-10.0), 0.0);
        assert!(c.collision_checking_enabled());
        c.goals_reached = 150;
        assert!((c.collision_weight(-10.0) - -5.0).abs() < 1e-12);
        c.goals_reached = 200;
        assert_eq!(c.collision_weight(-10.0), -10.0);
        c.goals_reached = 100_000;
        assert_eq!(c.goal_radius(), 0.26);
        assert_eq!(c.collision_weight(-10.0), -10.0);
    }

    #[test]
    fn disabled_curriculum_is_mature() {
        let c = Curriculum::new(CurriculumConfig {
            enabled: false,
            ..CurriculumConfig::default()
        });
        assert_eq!(c.goal_radius(), 0.26);
        assert_eq!(c.collision_weight(-10.0), -10.0);
        assert!(c.collision_checking_enabled());
    }

    #[test]
    fn nearest_index_breaks_ties_low() {
        let verts = vec![
            JointVector::new(vec![0.0]),
            JointVector::new(vec![1.0]),
            JointVector::new(vec![2.0]),
        ];
        assert_eq!(nearest_reference_index(&JointVector::new(vec![0.5]), &verts), 0);
        assert_eq!(nearest_reference_index(&JointVector::new(vec![0.51]), &verts), 1);
        assert_eq!(nearest_reference_index(&JointVector::new(vec![1.5]), &verts), 1);
    }

    #[test]
    fn divergence_of_on_path_segment_is_bounded_by_interval() {
        let task = single_joint_task(vec![]);
        let reference = straight_reference(&task);
        let d = path_divergence(
            &JointVector::new(vec![0.3]),
            &JointVector::new(vec![0.7]),
            &reference.resampled.vertices,
            task.resample_interval,
        );
        // On the path, the farthest a sample can be from a vertex is half the
        // resampling interval.
        assert!(d <= task.resample_interval / 2.0 + 1e-9);
    }

    #[test]
    fn step_moves_by_commanded_velocity() {
        let task = single_joint_task(vec![]);
        let reference = straight_reference(&task);
        let mut env = Env::new(task, reference);
        env.reset_to(JointVector::new(vec![0.0]));
        let out = env.step(&[0.5]);
        // v = 0.5 * 2.0 rad/s, dt = 0.1 -> 0.1 rad.
        assert!((env.state().angles[0] - 0.1).abs() < 1e-12);
        assert!((env.state().velocities[0] - 1.0).abs() < 1e-12);
        assert!(out.termination.is_none());
        assert!(!out.flags.limit_violation);
    }

    #[test]
    fn limit_violation_flagged_and_clamped() {
        let task = single_joint_task(vec![]);
        let reference = straight_reference(&task);
        let mut env = Env::new(task, reference);
        env.reset_to(JointVector::new(vec![2.95]));
        let out = env.step(&[1.0]); // would reach 3.15 > 3.0
        assert!(out.flags.limit_violation);
        assert_eq!(env.state().angles[0], 3.0);
    }

    #[test]
    fn goal_termination_and_bonus() {
        let task = single_joint_task(vec![]);
        let reference = straight_reference(&task);
        let mut env = Env::new(task, reference);
        // Mature radius 0.26; start just outside, one step enters.
        env.curriculum = Curriculum::mature(env.task.curriculum);
        env.reset_to(JointVector::new(vec![1.6]));
        let out = env.step(&[1.0]); // +0.2 -> 1.8, d_goal = 0.2 < 0.26
        assert_eq!(out.termination, Some(Termination::Goal));
        assert!(out.flags.reached_goal);
        assert!(out.reward > 40.0, "goal bonus should dominate: {}", out.reward);
    }

    #[test]
    fn timeout_after_max_steps() {
        let task = single_joint_task(vec![]);
        let reference = straight_reference(&task);
        let max_steps = task.max_steps;
        let mut env = Env::new(task, reference);
        env.reset_to(JointVector::new(vec![0.0]));
        for i in 0..max_steps {
            let out = env.step(&[0.0]);
            if i + 1 < max_steps {
                assert!(out.termination.is_none());
            } else {
                assert_eq!(out.termination, Some(Termination::Timeout));
            }
        }
    }

    #[test]
    fn collision_flag_follows_curriculum_phase() {
        use crate::arm::BoxObstacle;
        // Obstacle around the sphere position at angle ~1.0.
        let obstacle = BoxObstacle::new(
            Vector3::new(0.5 * 1.0f64.cos(), 0.5 * 1.0f64.sin(), 0.0),
            Vector3::new(0.02, 0.02, 0.02),
        );
        let task = single_joint_task(vec![obstacle]);
        let reference = straight_reference(&task);
        let mut env = Env::new(task, reference);

        env.curriculum.goals_reached = 0; // phase 1: checking off
        env.reset_to(JointVector::new(vec![0.95]));
        let out = env.step(&[0.25]); // 0.95 + 0.05 = 1.0
        assert!(!out.flags.collided);

        env.curriculum.goals_reached = 150; // penalty ramp: checking on
        env.reset_to(JointVector::new(vec![0.95]));
        let out = env.step(&[0.25]);
        assert!(out.flags.collided);
        // Penalty at half ramp is w3/2 = -5; reward must reflect it.
        let mut env2 = env.clone();
        env2.curriculum.goals_reached = 200;
        env2.reset_to(JointVector::new(vec![0.95]));
        let full = env2.step(&[0.25]);
        assert!((out.reward - full.reward - 5.0).abs() < 1e-9);
    }

    #[test]
    fn reset_mixes_start_and_reference() {
        let task = single_joint_task(vec![]);
        let reference = straight_reference(&task);
        let mut env = Env::new(task, reference);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut at_start = 0;
        let mut on_reference = 0;
        for _ in 0..400 {
            env.reset(&mut rng);
            if env.started_at_task_start() {
                at_start += 1;
            } else {
                on_reference += 1;
                // Must sit exactly on a resampled vertex.
                let verts = &env.references[0].resampled.vertices;
                let q = &env.state().angles;
                assert!(verts.iter().any(|v| v.distance(q) < 1e-12));
                assert!(env.state().velocities.as_slice().iter().all(|&v| v == 0.0));
            }
        }
        // p_reset = 0.3, but the first resampled vertex is the start itself
        // and counts as a start when drawn.
        assert!(at_start > 250 && on_reference > 80, "{at_start}/{on_reference}");
    }

    #[test]
    fn progress_term_rewards_forward_motion() {
        let task = single_joint_task(vec![]);
        let reference = straight_reference(&task);
        let mut env = Env::new(task.clone(), reference);
        env.reset_to(JointVector::new(vec![0.0]));
        let forward = env.step(&[1.0]);
        assert!(forward.flags.reference_progress > 0);
        env.reset_to(JointVector::new(vec![1.0]));
        let backward = env.step(&[-1.0]);
        assert!(backward.flags.reference_progress < 0);
        assert!(forward.reward > backward.reward);
    }

    #[test]
    fn reference_replacement_requires_strict_improvement() {
        use crate::agent::Transition;
        let task = single_joint_task(vec![]);
        let mut reference = straight_reference(&task);
        let mk_episode = |steps: usize, reward: f64, start: f64| EpisodeRecord {
            transitions: (0..steps)
                .map(|i| Transition {
                    state: vec![start + i as f64 * 0.1, 0.0],
                    action: vec![0.5],
                    reward: 0.0,
                    next_state: vec![start + (i + 1) as f64 * 0.1, 1.0],
                    terminal: i + 1 == steps,
                })
                .collect(),
            reached_goal: true,
            had_collision: false,
            steps,
            total_reward: reward,
            goal_id: 0,
        };
        // Planner reference counts as worst-case: first qualifying episode wins.
        assert!(reference.maybe_replace(&mk_episode(20, -5.0, 0.0), &task.start, 0.05));
        assert_eq!(reference.source_steps, 20);
        // Same steps, lower reward: rejected.
        assert!(!reference.maybe_replace(&mk_episode(20, -9.0, 0.0), &task.start, 0.05));
        // Same steps, higher reward: accepted.
        assert!(reference.maybe_replace(&mk_episode(20, -1.0, 0.0), &task.start, 0.05));
        // Fewer steps, any reward: accepted.
        assert!(reference.maybe_replace(&mk_episode(10, -50.0, 0.0), &task.start, 0.05));
        // Episode that began away from the task start: rejected.
        assert!(!reference.maybe_replace(&mk_episode(5, 100.0, 0.5), &task.start, 0.05));
        // Colliding or non-reaching episodes: rejected.
        let mut bad = mk_episode(3, 100.0, 0.0);
        bad.had_collision = true;
        assert!(!reference.maybe_replace(&bad, &task.start, 0.05));
    }

    #[test]
    fn task_file_parses_with_defaults() {
        let json = r#"{
            "world_file": "unused.json",
            "theta_start_deg": [0.0],
            "theta_goal_deg": [114.59155902616465]
        }"#;
        let file: TaskFile = serde_json::from_str(json).unwrap();
        assert_eq!(file.dt, 0.0035);
        assert_eq!(file.max_steps, 300);
        assert_eq!(file.p_reset, 0.3);
        assert_eq!(file.reward_weights, RewardWeights::default());
        let task = single_joint_task(vec![]);
        let spec = file.into_spec(task.world).unwrap();
        assert!((spec.goal[0] - 2.0).abs() < 1e-12);
    }
}
