//! Training/evaluation harness for the trajectory-optimization toolkit:
//! run configuration, the reference-guided TD3 training loop, deterministic
//! evaluation, the PID baseline comparison, goal generalization, metrics
//! CSVs, and SVG plots.

pub mod config;
pub mod experiments;
pub mod metrics;
pub mod plots;
pub mod rollout;
pub mod trainer;

pub use config::{Ablation, GoalGenSpec, HarnessError, TaskSource, TrainConfig, UpdateCadence};
pub use metrics::{EpisodeRow, EvalRow, RunMetrics};
pub use trainer::{Trainer, TrainSummary};
