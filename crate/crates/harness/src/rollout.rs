//! Deterministic policy rollouts and the evaluation battery.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reftraj_core::agent::Td3Agent;
use reftraj_core::arm::JointVector;
use reftraj_core::env::{Curriculum, Env, RolloutRecord, Termination, TimedPoint};
use serde::{Deserialize, Serialize};

/// One evaluation rollout: a start configuration and a goal index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalPoint {
    pub start: JointVector,
    pub goal: usize,
}

/// Outcome of a battery of deterministic rollouts.
#[derive(Debug, Clone)]
pub struct BatteryResult {
    pub records: Vec<RolloutRecord>,
    pub successes: usize,
    pub success_rate: f64,
}

/// Copy of the training environment with the curriculum forced to its mature
/// endpoint, so evaluations measure final-task competence throughout.
pub fn eval_env(env: &Env) -> Env {
    let mut eval = env.clone();
    eval.curriculum = Curriculum::mature(eval.task.curriculum);
    eval
}

/// Runs the policy without exploration noise from `start` until the episode
/// terminates. A start already inside the goal radius succeeds in zero steps.
pub fn policy_rollout(env: &mut Env, agent: &Td3Agent, start: &JointVector) -> RolloutRecord {
    let dof = env.dof();
    let action_dim = env.action_dim();
    env.reset_to(start.clone());
    // select_action's signature wants an RNG; without exploration it never
    // draws, so any seed leaves the rollout deterministic.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut points = vec![TimedPoint {
        time: 0.0,
        angles: env.state().angles.clone(),
        velocities: JointVector::zeros(dof),
        command: vec![0.0; action_dim],
    }];
    if env.state().angles.distance(env.goal()) <= env.curriculum.goal_radius() {
        return RolloutRecord {
            points,
            reached_goal: true,
            had_collision: false,
            diverged: false,
            steps: 0,
        };
    }
    let mut reached = false;
    let mut collided = false;
    loop {
        let obs = env.observe();
        let action = agent.select_action(&obs, false, &mut rng);
        let result = env.step(&action);
        points.push(TimedPoint {
            time: env.steps() as f64 * env.task.dt,
            angles: env.state().angles.clone(),
            velocities: env.state().velocities.clone(),
            command: action,
        });
        collided |= result.flags.collided;
        match result.termination {
            Some(Termination::Goal) => {
                reached = true;
                break;
            }
            Some(Termination::Timeout) => break,
            None => {}
        }
    }
    RolloutRecord {
        steps: points.len() - 1,
        points,
        reached_goal: reached,
        had_collision: collided,
        diverged: false,
    }
}

/// Runs every battery point in a mature-curriculum copy of `env`. A rollout
/// counts as a success only when it reaches the goal without any collision.
pub fn eval_battery(env: &Env, agent: &Td3Agent, points: &[EvalPoint]) -> BatteryResult {
    let mut eval = eval_env(env);
    let mut records = Vec::with_capacity(points.len());
    let mut successes = 0usize;
    for point in points {
        eval.set_active_goal(point.goal);
        let record = policy_rollout(&mut eval, agent, &point.start);
        if record.reached_goal && !record.had_collision {
            successes += 1;
        }
        records.push(record);
    }
    BatteryResult {
        success_rate: successes as f64 / points.len().max(1) as f64,
        successes,
        records,
    }
}
