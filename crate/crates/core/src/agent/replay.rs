//! Proportional prioritized experience replay backed by a sum tree.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// One environment step as stored for off-policy learning.
///
/// `terminal` marks true episode ends (goal reached); timeouts are stored
/// with `terminal = false` so the value bootstrap still applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Complete binary tree whose leaves hold sampling weights and whose root is
/// their sum; point updates and prefix descent are O(log n).
///
/// Parents are recomputed as the exact sum of their children on every update,
/// so no floating-point drift accumulates in the internal nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumTree {
    leaf_count: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaf_count = capacity.next_power_of_two().max(1);
        Self {
            leaf_count,
            nodes: vec![0.0; 2 * leaf_count],
        }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, index: usize) -> f64 {
        self.nodes[self.leaf_count + index]
    }

    pub fn set(&mut self, index: usize, weight: f64) {
        debug_assert!(index < self.leaf_count);
        debug_assert!(weight >= 0.0 && weight.is_finite());
        let mut i = self.leaf_count + index;
        self.nodes[i] = weight;
        i /= 2;
        while i >= 1 {
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
            i /= 2;
        }
    }

    /// Returns the leaf where the running prefix sum first exceeds `target`;
    /// drawing `target` uniformly from `[0, total)` samples leaf `i` with
    /// probability `weight_i / total`.
    pub fn find_prefix(&self, mut target: f64) -> usize {
        let mut i = 1;
        while i < self.leaf_count {
            let left = 2 * i;
            if target < self.nodes[left] {
                i = left;
            } else {
                target -= self.nodes[left];
                i = left + 1;
            }
        }
        i - self.leaf_count
    }
}

/// Indices and normalized importance weights for one sampled minibatch.
#[derive(Debug, Clone)]
pub struct PerSample {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Ring buffer whose sampling probability for slot i is
/// `(|td_i| + epsilon)^alpha / sum`, with importance weights
/// `(len * P(i))^-beta` normalized by the batch maximum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrioritizedReplay {
    capacity: usize,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    transitions: Vec<Transition>,
    write_cursor: usize,
    tree: SumTree,
    /// Largest `|td| + epsilon` seen so far; newcomers get this priority.
    max_raw_priority: f64,
}

impl PrioritizedReplay {
    pub fn new(capacity: usize, alpha: f64, beta: f64) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            alpha,
            beta,
            epsilon: 1e-6,
            transitions: Vec::new(),
            write_cursor: 0,
            tree: SumTree::new(capacity),
            max_raw_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.transitions[index]
    }

    /// Inserts at the write cursor (overwriting the oldest entry once full)
    /// with the maximum priority seen so far; returns the slot used.
    pub fn push(&mut self, transition: Transition) -> usize {
        let slot = self.write_cursor;
        if self.transitions.len() < self.capacity {
            self.transitions.push(transition);
        } else {
            self.transitions[slot] = transition;
        }
        self.tree.set(slot, self.max_raw_priority.powf(self.alpha));
        self.write_cursor = (self.write_cursor + 1) % self.capacity;
        slot
    }

    /// Draws `batch` independent samples proportional to priority.
    ///
    /// Panics if the buffer holds fewer than `batch` transitions; callers are
    /// expected to defer learning until enough experience exists.
    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> PerSample {
        assert!(
            self.transitions.len() >= batch,
            "replay holds {} transitions, need {batch}",
            self.transitions.len()
        );
        let total = self.tree.total();
        assert!(total > 0.0, "replay tree is empty");
        let n = self.transitions.len() as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for _ in 0..batch {
            let s = rng.gen::<f64>() * total;
            let mut idx = self.tree.find_prefix(s);
            if idx >= self.transitions.len() {
                idx = self.transitions.len() - 1;
            }
            let prob = self.tree.get(idx) / total;
            indices.push(idx);
            weights.push((n * prob).powf(-self.beta));
        }
        let max_w = weights.iter().cloned().fold(f64::MIN, f64::max);
        for w in &mut weights {
            *w /= max_w;
        }
        PerSample { indices, weights }
    }

    /// Reassigns priorities `(|td| + epsilon)^alpha` for the given slots.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) {
        debug_assert_eq!(indices.len(), td_errors.len());
        for (&i, &td) in indices.iter().zip(td_errors) {
            let raw = td.abs() + self.epsilon;
            self.tree.set(i, raw.powf(self.alpha));
            if raw > self.max_raw_priority {
                self.max_raw_priority = raw;
            }
        }
    }

    /// Current sampling probability of slot `i`.
    pub fn probability(&self, index: usize) -> f64 {
        self.tree.get(index) / self.tree.total()
    }
}
