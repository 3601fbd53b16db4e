//! PID waypoint-tracking baseline run through the same dynamics as the agent.

use super::{TaskSpec, Curriculum};
use crate::arm::{ArmState, JointVector};
use crate::planner::JointPath;
use serde::{Deserialize, Serialize};

/// Gains of the per-joint PID tracker plus its waypoint capture radius.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Joint-space radius at which the current waypoint counts as reached.
    pub capture_radius: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 4.0,
            ki: 0.0,
            kd: 0.2,
            capture_radius: 0.05,
        }
    }
}

/// One sampled point of an executed trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimedPoint {
    /// Seconds since episode start.
    pub time: f64,
    pub angles: JointVector,
    /// Velocities that produced this point, rad/s (zero for the first point).
    pub velocities: JointVector,
    /// Normalized command in `[-1, 1]^n` (zero for the first point).
    pub command: Vec<f64>,
}

/// A full rollout with its outcome flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutRecord {
    /// Trajectory including the initial state at `time = 0`.
    pub points: Vec<TimedPoint>,
    pub reached_goal: bool,
    pub had_collision: bool,
    pub diverged: bool,
    /// Control steps taken (`points.len() - 1`).
    pub steps: usize,
}

impl RolloutRecord {
    /// Seconds from start to the final recorded point.
    pub fn duration(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.time)
    }

    /// Mean commanded acceleration magnitude over the rollout, rad/s^2.
    pub fn mean_acceleration(&self, dt: f64) -> f64 {
        if self.points.len() < 2 {
            return 0.0;
        }
        let mut sum = 0.0;
        for w in self.points.windows(2) {
            sum += w[0]
                .velocities
                .as_slice()
                .iter()
                .zip(w[1].velocities.as_slice())
                .map(|(a, b)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt()
                / dt;
        }
        sum / (self.points.len() - 1) as f64
    }

    /// CSV with time, angles in degrees, velocities in deg/s, and the raw
    /// normalized commands.
    pub fn to_csv(&self) -> String {
        let n = self.points.first().map_or(0, |p| p.angles.len());
        let mut out = String::from("t_s");
        for i in 1..=n {
            out.push_str(&format!(",theta{i}_deg"));
        }
        for i in 1..=n {
            out.push_str(&format!(",omega{i}_deg_s"));
        }
        for i in 1..=n {
            out.push_str(&format!(",command{i}"));
        }
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!("{:.6}", p.time));
            for d in p.angles.to_degrees() {
                out.push_str(&format!(",{d:.9}"));
            }
            for d in p.velocities.to_degrees() {
                out.push_str(&format!(",{d:.9}"));
            }
            for c in &p.command {
                out.push_str(&format!(",{c:.9}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Tracks `waypoints` from the task start with a per-joint PID velocity law,
/// advancing to the next waypoint whenever the current one is within the
/// capture radius. Uses the same clamped velocity dynamics, mature goal
/// radius, and step limit as the learned agent; collisions never abort the
/// rollout, they only mark it.
///
/// Divergence (non-finite state or goal error exceeding the joint-space span
/// of the limits) aborts the rollout and flags it.
pub fn run_pid(task: &TaskSpec, waypoints: &JointPath, gains: &PidGains) -> RolloutRecord {
    assert!(!waypoints.is_empty(), "need at least one waypoint");
    let dof = task.dof();
    let scale = task.action_scale();
    let curriculum = Curriculum::mature(task.curriculum);
    let goal_radius = curriculum.goal_radius();
    let span = task.world.chain.limit_span();

    let mut state = ArmState::at_rest(task.start.clone());
    let mut integral = vec![0.0; dof];
    let mut prev_error: Option<Vec<f64>> = None;
    let mut target_index = 0usize;

    let mut record = RolloutRecord {
        points: vec![TimedPoint {
            time: 0.0,
            angles: state.angles.clone(),
            velocities: state.velocities.clone(),
            command: vec![0.0; dof],
        }],
        reached_goal: false,
        had_collision: false,
        diverged: false,
        steps: 0,
    };

    for step in 1..=task.max_steps {
        // Advance past every already-captured waypoint (but keep the last).
        while target_index + 1 < waypoints.len()
            && state.angles.distance(&waypoints.vertices[target_index]) <= gains.capture_radius
        {
            target_index += 1;
        }
        let target = &waypoints.vertices[target_index];

        let error: Vec<f64> = target
            .as_slice()
            .iter()
            .zip(state.angles.as_slice())
            .map(|(t, a)| t - a)
            .collect();
        let mut command = vec![0.0; dof];
        for i in 0..dof {
            integral[i] += error[i] * task.dt;
            let derivative = match &prev_error {
                Some(prev) => (error[i] - prev[i]) / task.dt,
                None => 0.0,
            };
            let velocity = gains.kp * error[i] + gains.ki * integral[i] + gains.kd * derivative;
            command[i] = (velocity / scale[i]).clamp(-1.0, 1.0);
        }
        prev_error = Some(error);

        let commanded = JointVector::new(
            command.iter().zip(&scale).map(|(c, s)| c * s).collect(),
        );
        let mut next = JointVector::new(
            state
                .angles
                .as_slice()
                .iter()
                .zip(commanded.as_slice())
                .map(|(a, v)| a + v * task.dt)
                .collect(),
        );
        task.world.chain.clamp_to_limits(&mut next);
        state = ArmState {
            angles: next,
            velocities: commanded,
        };

        record.points.push(TimedPoint {
            time: step as f64 * task.dt,
            angles: state.angles.clone(),
            velocities: state.velocities.clone(),
            command,
        });
        record.steps = step;

        if task.world.check_collision(&state.angles) {
            record.had_collision = true;
        }
        let goal_error = state.angles.distance(&task.goal);
        if !goal_error.is_finite() || goal_error > span {
            record.diverged = true;
            break;
        }
        if goal_error <= goal_radius {
            record.reached_goal = true;
            break;
        }
    }
    record
}
