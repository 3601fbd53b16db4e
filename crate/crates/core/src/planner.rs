//! Sampling-based joint-space planning: RRT, shortcut smoothing, resampling.

use crate::arm::{ArmError, JointVector, WorldModel};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Arm(#[from] ArmError),
    #[error("start configuration is invalid: {0}")]
    BadStart(&'static str),
    #[error("goal configuration is invalid: {0}")]
    BadGoal(&'static str),
    #[error("no path found within {0} iterations")]
    NoPath(usize),
    #[error("malformed path data: {0}")]
    Parse(String),
}

/// Ordered joint-space waypoints; consecutive vertices are straight segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPath {
    pub vertices: Vec<JointVector>,
}

impl JointPath {
    pub fn new(vertices: Vec<JointVector>) -> Self {
        Self { vertices }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn first(&self) -> &JointVector {
        &self.vertices[0]
    }

    pub fn last(&self) -> &JointVector {
        self.vertices.last().expect("non-empty path")
    }

    /// Total joint-space arc length.
    pub fn length(&self) -> f64 {
        self.vertices
            .windows(2)
            .map(|w| w[0].distance(&w[1]))
            .sum()
    }

    /// Serializes as CSV with one row per vertex, angles in degrees.
    pub fn to_csv_degrees(&self) -> String {
        let n = self.vertices.first().map_or(0, JointVector::len);
        let mut out = String::new();
        let header: Vec<String> = (0..n).map(|i| format!("theta{}_deg", i + 1)).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for v in &self.vertices {
            let row: Vec<String> = v.to_degrees().iter().map(|d| format!("{d:.12}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv_degrees(text: &str) -> Result<Self, PlanError> {
        let mut vertices = Vec::new();
        let mut width = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if lineno == 0 && line.contains("theta") {
                continue;
            }
            let deg: Vec<f64> = line
                .split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| PlanError::Parse(format!("line {}: {e}", lineno + 1)))
                })
                .collect::<Result<_, _>>()?;
            match width {
                None => width = Some(deg.len()),
                Some(w) if w != deg.len() => {
                    return Err(PlanError::Parse(format!(
                        "line {}: expected {} fields, got {}",
                        lineno + 1,
                        w,
                        deg.len()
                    )))
                }
                _ => {}
            }
            vertices.push(JointVector::from_degrees(&deg));
        }
        if vertices.is_empty() {
            return Err(PlanError::Parse("no vertices".into()));
        }
        Ok(JointPath::new(vertices))
    }
}

/// RRT planner parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RrtConfig {
    /// Maximum tree extensions before giving up.
    pub max_iterations: usize,
    /// Extension length per step, radians.
    pub step_size: f64,
    /// Probability of sampling the goal instead of a uniform configuration.
    pub goal_bias: f64,
    /// Joint-space radius in which the goal counts as reached, radians.
    pub goal_tolerance: f64,
    /// Collision-check sample spacing along tree edges, radians.
    pub edge_resolution: f64,
}

impl Default for RrtConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            step_size: 0.2,
            goal_bias: 0.1,
            goal_tolerance: 0.2,
            edge_resolution: 0.02,
        }
    }
}

/// Shortcut smoother parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShortcutConfig {
    /// Number of random vertex-pair attempts.
    pub attempts: usize,
    /// Collision-check sample spacing along candidate shortcuts, radians.
    pub subdivision_distance: f64,
}

impl Default for ShortcutConfig {
    fn default() -> Self {
        Self {
            attempts: 200,
            subdivision_distance: 0.02,
        }
    }
}

struct Node {
    q: JointVector,
    parent: Option<usize>,
}

fn sample_uniform<R: Rng>(world: &WorldModel, rng: &mut R) -> JointVector {
    JointVector::new(
        world
            .chain
            .joints
            .iter()
            .map(|j| rng.gen_range(j.min..=j.max))
            .collect(),
    )
}

fn nearest(nodes: &[Node], q: &JointVector) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, n) in nodes.iter().enumerate() {
        let d = n.q.distance(q);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Grows a rapidly-exploring random tree from `start` until a vertex lands
/// within `goal_tolerance` of `goal` and the closing segment is free; the
/// returned path ends exactly at `goal`. Deterministic for a fixed `rng`.
pub fn rrt_plan<R: Rng>(
    world: &WorldModel,
    start: &JointVector,
    goal: &JointVector,
    config: &RrtConfig,
    rng: &mut R,
) -> Result<JointPath, PlanError> {
    world.chain.check_dims(start)?;
    world.chain.check_dims(goal)?;
    if world.chain.check_joint_limits(start) {
        return Err(PlanError::BadStart("outside joint limits"));
    }
    if world.chain.check_joint_limits(goal) {
        return Err(PlanError::BadGoal("outside joint limits"));
    }
    if world.check_collision(start) {
        return Err(PlanError::BadStart("in collision"));
    }
    if world.check_collision(goal) {
        return Err(PlanError::BadGoal("in collision"));
    }
    if start == goal {
        return Ok(JointPath::new(vec![start.clone()]));
    }

    let mut nodes = vec![Node {
        q: start.clone(),
        parent: None,
    }];
    for _ in 0..config.max_iterations {
        let target = if rng.gen::<f64>() < config.goal_bias {
            goal.clone()
        } else {
            sample_uniform(world, rng)
        };
        let near = nearest(&nodes, &target);
        let dist = nodes[near].q.distance(&target);
        if dist < 1e-12 {
            continue;
        }
        let new_q = if dist <= config.step_size {
            target
        } else {
            nodes[near].q.lerp(&target, config.step_size / dist)
        };
        if !world.segment_collision_free(&nodes[near].q, &new_q, config.edge_resolution) {
            continue;
        }
        nodes.push(Node {
            q: new_q,
            parent: Some(near),
        });
        let new_idx = nodes.len() - 1;
        if nodes[new_idx].q.distance(goal) <= config.goal_tolerance
            && world.segment_collision_free(&nodes[new_idx].q, goal, config.edge_resolution)
        {
            let mut rev = vec![goal.clone()];
            let mut cursor = Some(new_idx);
            while let Some(i) = cursor {
                rev.push(nodes[i].q.clone());
                cursor = nodes[i].parent;
            }
            rev.reverse();
            rev.dedup_by(|a, b| a.distance(b) < 1e-12);
            return Ok(JointPath::new(rev));
        }
    }
    Err(PlanError::NoPath(config.max_iterations))
}

/// Repeatedly picks two random vertices and replaces the intermediate stretch
/// with a straight segment whenever that segment is collision-free.
/// Endpoints are never moved. Deterministic for a fixed `rng`.
#[must_use = "shortcut returns the smoothed path; the input is not modified"]
pub fn shortcut<R: Rng>(
    world: &WorldModel,
    path: &JointPath,
    config: &ShortcutConfig,
    rng: &mut R,
) -> JointPath {
    let mut vertices = path.vertices.clone();
    for _ in 0..config.attempts {
        if vertices.len() < 3 {
            break;
        }
        // Uniform over unordered index pairs; equal or adjacent picks are
        // spent attempts with nothing to remove.
        let a = rng.gen_range(0..vertices.len());
        let b = rng.gen_range(0..vertices.len());
        let (i, j) = (a.min(b), a.max(b));
        if j - i < 2 {
            continue;
        }
        if world.segment_collision_free(&vertices[i], &vertices[j], config.subdivision_distance) {
            vertices.drain(i + 1..j);
        }
    }
    JointPath::new(vertices)
}

/// Rebuilds the path with vertices at arc-length positions `0, d, 2d, ...`
/// plus the exact final endpoint; consecutive gaps never exceed `interval`.
pub fn resample_path(path: &JointPath, interval: f64) -> JointPath {
    assert!(interval > 0.0, "resample interval must be positive");
    if path.len() < 2 {
        return path.clone();
    }
    let total = path.length();
    let mut out = vec![path.first().clone()];
    let mut next_mark = interval;
    let mut walked = 0.0;
    for w in path.vertices.windows(2) {
        let seg = w[0].distance(&w[1]);
        if seg < 1e-15 {
            continue;
        }
        while next_mark <= walked + seg && next_mark < total {
            let t = (next_mark - walked) / seg;
            out.push(w[0].lerp(&w[1], t));
            next_mark += interval;
        }
        walked += seg;
    }
    let end = path.last().clone();
    if out.last().map_or(true, |v| v.distance(&end) > 1e-12) {
        out.push(end);
    }
    JointPath::new(out)
}

/// Convenience alias for [`JointPath::length`].
pub fn path_length(path: &JointPath) -> f64 {
    path.length()
}
