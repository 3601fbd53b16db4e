//! Run metrics: per-episode and per-evaluation rows, CSV schemas, and the
//! acceleration/length recomputations used to cross-check exported
//! trajectories.

use reftraj_core::env::{RolloutRecord, TimedPoint};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::config::HarnessError;

/// One finished training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: u64,
    /// Environment steps collected so far, inclusive of this episode.
    pub total_steps: u64,
    pub steps: usize,
    pub reward: f64,
    pub reached_goal: bool,
    pub collided: bool,
    /// Goal radius in effect during the episode, radians.
    pub goal_radius: f64,
    /// Collision weight in effect during the episode.
    pub collision_weight: f64,
}

/// One evaluation battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    /// Environment steps collected when the battery ran.
    pub total_steps: u64,
    /// Fraction of battery rollouts that reached the goal.
    pub success_rate: f64,
    /// Whether the rollout from the task start reached the goal.
    pub from_start_reached: bool,
    pub from_start_steps: usize,
    /// Exactly `from_start_steps` times the control period.
    pub time_to_goal_s: f64,
    /// Joint-space arc length of the from-start rollout, radians.
    pub path_length: f64,
    /// Largest per-joint commanded acceleration, rad/s^2.
    pub max_accel: Vec<f64>,
}

/// All rows of one training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub episodes: Vec<EpisodeRow>,
    pub evals: Vec<EvalRow>,
}

impl RunMetrics {
    pub fn episodes_csv(&self) -> String {
        let mut out = String::from(
            "episode,total_steps,steps,reward,reached_goal,collided,goal_radius,collision_weight\n",
        );
        for r in &self.episodes {
            let _ = writeln!(
                out,
                "{},{},{},{:.9},{},{},{:.9},{:.9}",
                r.episode,
                r.total_steps,
                r.steps,
                r.reward,
                u8::from(r.reached_goal),
                u8::from(r.collided),
                r.goal_radius,
                r.collision_weight
            );
        }
        out
    }

    pub fn evals_csv(&self) -> String {
        let joints = self.evals.first().map_or(0, |r| r.max_accel.len());
        let mut out = String::from(
            "total_steps,success_rate,from_start_reached,from_start_steps,time_to_goal_s,path_length",
        );
        for j in 1..=joints {
            let _ = write!(out, ",max_accel{j}");
        }
        out.push('\n');
        for r in &self.evals {
            let _ = write!(
                out,
                "{},{:.6},{},{},{:.9},{:.9}",
                r.total_steps,
                r.success_rate,
                u8::from(r.from_start_reached),
                r.from_start_steps,
                r.time_to_goal_s,
                r.path_length
            );
            for a in &r.max_accel {
                let _ = write!(out, ",{a:.9}");
            }
            out.push('\n');
        }
        out
    }

    /// Writes `episodes.csv` and `evals.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("episodes.csv"), self.episodes_csv())?;
        std::fs::write(dir.join("evals.csv"), self.evals_csv())?;
        Ok(())
    }

    /// Mean return over the final `fraction` of episodes (for stability
    /// comparisons across seeds).
    pub fn tail_mean_return(&self, fraction: f64) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        let n = self.episodes.len();
        let tail = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
        let slice = &self.episodes[n - tail..];
        slice.iter().map(|r| r.reward).sum::<f64>() / tail as f64
    }
}

/// Largest per-joint |Δvelocity|/Δt over a rollout; index j is joint j.
/// The first command counts: it is a jump from rest.
pub fn max_joint_accelerations(points: &[TimedPoint], dt: f64) -> Vec<f64> {
    let joints = points.first().map_or(0, |p| p.angles.len());
    let mut max = vec![0.0f64; joints];
    for w in points.windows(2) {
        for j in 0..joints {
            let a = (w[1].velocities[j] - w[0].velocities[j]).abs() / dt;
            if a > max[j] {
                max[j] = a;
            }
        }
    }
    max
}

/// Joint-space arc length of a rollout, radians.
pub fn rollout_path_length(points: &[TimedPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| w[0].angles.distance(&w[1].angles))
        .sum()
}

/// Scalar smoothness figure: the largest entry of
/// [`max_joint_accelerations`].
pub fn peak_acceleration(record: &RolloutRecord, dt: f64) -> f64 {
    max_joint_accelerations(&record.points, dt)
        .into_iter()
        .fold(0.0, f64::max)
}

/// Parses a rollout CSV written by [`RolloutRecord::to_csv`] back into timed
/// points (degrees converted back to radians), so every reported number can
/// be recomputed from the exported artifact.
pub fn parse_rollout_csv(text: &str) -> Result<Vec<TimedPoint>, HarnessError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| HarnessError::Other("empty rollout CSV".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    let joints = columns
        .iter()
        .filter(|c| c.starts_with("theta"))
        .count();
    if joints == 0 || columns.len() != 1 + 3 * joints {
        return Err(HarnessError::Other(format!(
            "unexpected rollout CSV header {header:?}"
        )));
    }
    let mut points = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| HarnessError::Other(format!("bad rollout CSV field: {e}")))?;
        if fields.len() != columns.len() {
            return Err(HarnessError::Other("ragged rollout CSV row".into()));
        }
        let deg = std::f64::consts::PI / 180.0;
        points.push(TimedPoint {
            time: fields[0],
            angles: reftraj_core::arm::JointVector::new(
                fields[1..1 + joints].iter().map(|d| d * deg).collect(),
            ),
            velocities: reftraj_core::arm::JointVector::new(
                fields[1 + joints..1 + 2 * joints]
                    .iter()
                    .map(|d| d * deg)
                    .collect(),
            ),
            command: fields[1 + 2 * joints..].to_vec(),
        });
    }
    Ok(points)
}
