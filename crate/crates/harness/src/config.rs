//! Run configuration: training settings, ablation switches, and error/exit
//! code mapping for the CLI.

use reftraj_core::agent::Td3Config;
use reftraj_core::env::TaskSpec;
use reftraj_core::planner::{PlanError, RrtConfig, ShortcutConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Where the task comes from: a bundled preset name, a task JSON file, or an
/// inline spec. In config JSON this reads `{"preset": "toy1"}` or
/// `{"inline": {...}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskSource {
    Preset(String),
    Inline(Box<TaskSpec>),
}

impl TaskSource {
    /// Resolves to a concrete task. Preset names are tried first; anything
    /// else is treated as a path to a task JSON file.
    pub fn resolve(&self) -> Result<TaskSpec, HarnessError> {
        match self {
            TaskSource::Inline(spec) => {
                spec.validate()
                    .map_err(|e| HarnessError::BadConfig(e.to_string()))?;
                Ok((**spec).clone())
            }
            TaskSource::Preset(name) => {
                if let Some(task) = reftraj_core::presets::task_by_name(name) {
                    return Ok(task);
                }
                let path = Path::new(name);
                if path.exists() {
                    return reftraj_core::env::TaskFile::load(path)
                        .map_err(|e| HarnessError::BadConfig(e.to_string()));
                }
                Err(HarnessError::BadConfig(format!(
                    "unknown task {name:?}: not a preset ({}) and not a file",
                    reftraj_core::presets::preset_names().join(", ")
                )))
            }
        }
    }
}

/// Feature switches that disable one ingredient each; independent of one
/// another.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// Zero the reference-shaping weights (path distance and path progress).
    pub no_reference: bool,
    /// Start with the mature goal radius and full collision penalty.
    pub no_curriculum: bool,
    /// Never feed finished episodes to the demonstration buffer.
    pub no_self_imitation: bool,
    /// Never replace the planner reference with a better episode.
    pub no_reference_update: bool,
}

impl Ablation {
    /// Parses CLI switch names; unknown names are rejected.
    pub fn parse(names: &[String]) -> Result<Self, HarnessError> {
        let mut ablation = Ablation::default();
        for name in names {
            match name.as_str() {
                "no-ref" => ablation.no_reference = true,
                "no-curriculum" => ablation.no_curriculum = true,
                "no-self-imitation" => ablation.no_self_imitation = true,
                "no-ref-update" => ablation.no_reference_update = true,
                other => {
                    return Err(HarnessError::BadConfig(format!(
                        "unknown ablation {other:?}; expected no-ref, no-curriculum, \
                         no-self-imitation, or no-ref-update"
                    )))
                }
            }
        }
        Ok(ablation)
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.no_reference {
            parts.push("no-ref");
        }
        if self.no_curriculum {
            parts.push("no-curriculum");
        }
        if self.no_self_imitation {
            parts.push("no-self-imitation");
        }
        if self.no_reference_update {
            parts.push("no-ref-update");
        }
        if parts.is_empty() {
            "full".into()
        } else {
            parts.join("+")
        }
    }
}

/// When gradient updates run relative to sample collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateCadence {
    /// One cycle per finished episode, with as many gradient steps as the
    /// episode had environment steps.
    PerEpisode,
    /// A cycle of `n` gradient steps every `n` collected samples, regardless
    /// of episode boundaries.
    EverySamples(u64),
}

/// Everything a training run needs besides the seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub task: TaskSource,
    /// Environment-step budget for the whole run.
    pub budget: u64,
    /// Replay-buffer fill required before the first update cycle.
    pub warmup: usize,
    pub cadence: UpdateCadence,
    pub replay_capacity: usize,
    pub agent: Td3Config,
    /// Capacity of the best-episode demonstration buffer.
    pub topk: usize,
    /// Per-goal demonstration capacity when training over a goal set.
    pub per_goal_topk: usize,
    /// Episodes between evaluation batteries.
    pub eval_every_episodes: u64,
    /// Deterministic evaluation starts drawn from the initial reference, in
    /// addition to the task start.
    pub eval_reference_starts: usize,
    /// Battery success rate that counts as a successful evaluation.
    pub success_threshold: f64,
    /// Stop once three consecutive evaluations clear the threshold.
    pub early_stop: bool,
    /// Seeds the CLI loops over; experiment helpers take explicit lists.
    pub seeds: Vec<u64>,
    /// Checkpoint written at episode boundaries and on divergence.
    pub checkpoint_path: Option<PathBuf>,
    /// Episodes between periodic checkpoints (None: only final/dump).
    pub checkpoint_every_episodes: Option<u64>,
    pub planner: RrtConfig,
    pub shortcut: ShortcutConfig,
    pub ablation: Ablation,
    /// Print a progress line on stderr after each evaluation battery.
    pub verbose: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: TaskSource::Preset("toy1".into()),
            budget: 1_000_000,
            warmup: 1_000,
            cadence: UpdateCadence::PerEpisode,
            replay_capacity: 100_000,
            agent: Td3Config::default(),
            topk: 5,
            per_goal_topk: 2,
            eval_every_episodes: 10,
            eval_reference_starts: 9,
            success_threshold: 0.9,
            early_stop: false,
            seeds: vec![0],
            checkpoint_path: None,
            checkpoint_every_episodes: None,
            planner: RrtConfig::default(),
            shortcut: ShortcutConfig::default(),
            ablation: Ablation::default(),
            verbose: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.warmup < self.agent.batch_size {
            return Err(HarnessError::BadConfig(format!(
                "warmup {} is smaller than the batch size {}",
                self.warmup, self.agent.batch_size
            )));
        }
        if self.replay_capacity < self.warmup {
            return Err(HarnessError::BadConfig(
                "replay capacity smaller than warmup".into(),
            ));
        }
        if self.topk == 0 || self.per_goal_topk == 0 {
            return Err(HarnessError::BadConfig(
                "demonstration buffer capacity must be positive".into(),
            ));
        }
        if let UpdateCadence::EverySamples(0) = self.cadence {
            return Err(HarnessError::BadConfig(
                "update cadence of zero samples".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.success_threshold) {
            return Err(HarnessError::BadConfig(
                "success threshold outside [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Loads a JSON config file.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let config: TrainConfig =
            serde_json::from_str(&text).map_err(|e| HarnessError::BadConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Settings sized for the bundled two-link tasks: small networks and a
    /// budget that fits a desktop CPU run.
    pub fn toy(task_name: &str) -> Self {
        Self {
            task: TaskSource::Preset(task_name.into()),
            budget: 150_000,
            agent: Td3Config {
                hidden: vec![32, 24],
                ..Td3Config::default()
            },
            early_stop: true,
            ..Self::default()
        }
    }
}

/// Goal-generalization protocol: a rectangle of end-effector goals on the
/// task's workspace plane.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GoalGenSpec {
    pub train: TrainConfig,
    /// Rectangle width, millimetres.
    pub width_mm: f64,
    /// Rectangle height, millimetres.
    pub height_mm: f64,
    /// Training goals sampled from the rectangle.
    pub train_goals: usize,
    /// Held-out goals sampled from the same rectangle.
    pub test_goals: usize,
    /// IK attempts per goal before giving up.
    pub ik_attempts: usize,
}

impl Default for GoalGenSpec {
    fn default() -> Self {
        Self {
            train: TrainConfig::toy("toy1"),
            width_mm: 100.0,
            height_mm: 100.0,
            train_goals: 10,
            test_goals: 50,
            ik_attempts: 200,
        }
    }
}

impl GoalGenSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.train.validate()?;
        if self.width_mm < 0.0 || self.height_mm < 0.0 {
            return Err(HarnessError::BadConfig(
                "rectangle dimensions must be non-negative".into(),
            ));
        }
        if self.train_goals == 0 {
            return Err(HarnessError::BadConfig(
                "at least one training goal required".into(),
            ));
        }
        Ok(())
    }
}

/// Harness failures, mapped onto process exit codes by the CLI.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("planning failed: {0}")]
    Planning(#[from] PlanError),
    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: u64, detail: String },
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl HarnessError {
    /// 2: planning failure, 3: training divergence, 4: bad config, 1: rest.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Planning(_) => 2,
            HarnessError::Divergence { .. } => 3,
            HarnessError::BadConfig(_) => 4,
            HarnessError::Io(_) | HarnessError::Other(_) => 1,
        }
    }
}
