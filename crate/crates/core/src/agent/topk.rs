//! Best-episode store feeding the self-imitation (behavioral cloning) loss.

use super::replay::Transition;
use crate::arm::JointVector;
use crate::planner::JointPath;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One finished episode with its outcome flags and return.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub transitions: Vec<Transition>,
    pub reached_goal: bool,
    pub had_collision: bool,
    pub steps: usize,
    pub total_reward: f64,
    /// Index into the goal set; 0 when training a single goal.
    pub goal_id: usize,
}

impl EpisodeRecord {
    /// True iff the episode may serve as a demonstration or reference.
    pub fn qualifies(&self) -> bool {
        self.reached_goal && !self.had_collision
    }

    /// Angles visited over the episode, recovered from the stored states
    /// (each state starts with the `dof` joint angles).
    pub fn joint_path(&self, dof: usize) -> JointPath {
        let mut vertices: Vec<JointVector> = self
            .transitions
            .iter()
            .map(|t| JointVector::new(t.state[..dof].to_vec()))
            .collect();
        if let Some(last) = self.transitions.last() {
            vertices.push(JointVector::new(last.next_state[..dof].to_vec()));
        }
        JointPath::new(vertices)
    }

    /// Angles at the start of the episode.
    pub fn start_angles(&self, dof: usize) -> Option<JointVector> {
        self.transitions
            .first()
            .map(|t| JointVector::new(t.state[..dof].to_vec()))
    }
}

/// Keeps the `capacity` highest-return qualifying episodes, sorted by return
/// descending. A full buffer only admits strictly better episodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopKBuffer {
    capacity: usize,
    episodes: Vec<EpisodeRecord>,
}

impl TopKBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            episodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.episodes.len() == self.capacity
    }

    pub fn episodes(&self) -> &[EpisodeRecord] {
        &self.episodes
    }

    /// Returns of the stored episodes, best first.
    pub fn rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.total_reward).collect()
    }

    /// Admits the episode if it qualifies and either the buffer has room or
    /// the episode strictly beats the current worst; returns true on admit.
    pub fn offer(&mut self, episode: EpisodeRecord) -> bool {
        if !episode.qualifies() {
            return false;
        }
        if self.is_full() {
            let worst = self.episodes.last().expect("full buffer").total_reward;
            if episode.total_reward <= worst {
                return false;
            }
            self.episodes.pop();
        }
        let at = self
            .episodes
            .partition_point(|e| e.total_reward >= episode.total_reward);
        self.episodes.insert(at, episode);
        true
    }

    pub fn total_transitions(&self) -> usize {
        self.episodes.iter().map(|e| e.transitions.len()).sum()
    }

    fn transition_at(&self, mut flat: usize) -> &Transition {
        for e in &self.episodes {
            if flat < e.transitions.len() {
                return &e.transitions[flat];
            }
            flat -= e.transitions.len();
        }
        unreachable!("flat index out of range")
    }
}

/// Demonstration source for the cloning loss: a single top-K buffer, or one
/// buffer per goal when training across a goal set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum DemoStore {
    Single(TopKBuffer),
    PerGoal {
        buffers: BTreeMap<usize, TopKBuffer>,
        per_goal_capacity: usize,
        goal_count: usize,
    },
}

impl DemoStore {
    pub fn single(capacity: usize) -> Self {
        DemoStore::Single(TopKBuffer::new(capacity))
    }

    pub fn per_goal(goal_count: usize, per_goal_capacity: usize) -> Self {
        DemoStore::PerGoal {
            buffers: BTreeMap::new(),
            per_goal_capacity,
            goal_count,
        }
    }

    /// Routes the episode to the matching buffer; returns true on admit.
    pub fn offer(&mut self, episode: EpisodeRecord) -> bool {
        match self {
            DemoStore::Single(buf) => buf.offer(episode),
            DemoStore::PerGoal {
                buffers,
                per_goal_capacity,
                ..
            } => buffers
                .entry(episode.goal_id)
                .or_insert_with(|| TopKBuffer::new(*per_goal_capacity))
                .offer(episode),
        }
    }

    /// Whether the cloning loss should be applied yet: the single buffer must
    /// be full; per-goal buffers activate once more than 20% of goals have at
    /// least one stored episode.
    pub fn active(&self) -> bool {
        match self {
            DemoStore::Single(buf) => buf.is_full(),
            DemoStore::PerGoal {
                buffers,
                goal_count,
                ..
            } => {
                let non_empty = buffers.values().filter(|b| !b.is_empty()).count();
                5 * non_empty > *goal_count
            }
        }
    }

    pub fn total_transitions(&self) -> usize {
        match self {
            DemoStore::Single(buf) => buf.total_transitions(),
            DemoStore::PerGoal { buffers, .. } => {
                buffers.values().map(TopKBuffer::total_transitions).sum()
            }
        }
    }

    /// Draws `batch` transitions uniformly over everything stored.
    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Vec<&Transition> {
        let total = self.total_transitions();
        assert!(total > 0, "demo store is empty");
        (0..batch)
            .map(|_| {
                let flat = rng.gen_range(0..total);
                match self {
                    DemoStore::Single(buf) => buf.transition_at(flat),
                    DemoStore::PerGoal { buffers, .. } => {
                        let mut flat = flat;
                        for b in buffers.values() {
                            if flat < b.total_transitions() {
                                return b.transition_at(flat);
                            }
                            flat -= b.total_transitions();
                        }
                        unreachable!("flat index out of range")
                    }
                }
            })
            .collect()
    }
}
