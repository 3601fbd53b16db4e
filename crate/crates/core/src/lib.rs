//! Joint-space trajectory optimization for kinematic arms.
//!
//! The crate models an n-DoF serial arm in a world of box obstacles, plans
//! collision-free reference paths with RRT plus shortcut smoothing, and trains
//! a TD3 agent whose shaped reward keeps rollouts near the reference while it
//! learns shorter, smoother trajectories than the reference itself. A PID
//! path-tracking controller is included as the comparison baseline.

pub mod agent;
pub mod arm;
pub mod env;
pub mod nnet;
pub mod planner;
pub mod presets;
