//! Environment oracles: exhaustive-scan recomputation of the path-shaping
//! terms, term-by-term reward reconstruction, and episode bookkeeping.

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reftraj_core::arm::{CollisionSphere, Joint, JointVector, KinematicChain, WorldModel};
use reftraj_core::env::{
    nearest_reference_index, path_divergence, CurriculumConfig, Env, ReferenceTrajectory,
    RewardWeights, TaskSpec, Termination,
};
use reftraj_core::planner::JointPath;

// ---------------------------------------------------------------------------
// Exhaustive-scan oracles for the reference-shaping terms.
// ---------------------------------------------------------------------------

/// Nearest reference vertex by brute force; ties keep the smallest index.
fn oracle_nearest(q: &JointVector, vertices: &[JointVector]) -> usize {
    let mut best = 0usize;
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

/// Divergence oracle per the shaping definition: sample the agent's segment
/// at spacing <= interval (endpoints included), take each sample's distance
/// to its nearest reference vertex, and return the maximum.
fn oracle_divergence(
    qa: &JointVector,
    qb: &JointVector,
    vertices: &[JointVector],
    interval: f64,
) -> f64 {
    let dist = qa.distance(qb);
    let steps = (dist / interval).ceil().max(1.0) as usize;
    let mut worst: f64 = 0.0;
    for k in 0..=steps {
        let sample = qa.lerp(qb, k as f64 / steps as f64);
        let mut nearest = f64::INFINITY;
        for v in vertices {
            nearest = nearest.min(sample.distance(v));
        }
        worst = worst.max(nearest);
    }
    worst
}

fn random_vertices(dof: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<JointVector> {
    (0..count)
        .map(|_| JointVector::new((0..dof).map(|_| rng.gen_range(-2.0..2.0)).collect()))
        .collect()
}

#[test]
fn shaping_terms_match_exhaustive_oracles_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    for _ in 0..500 {
        let dof = rng.gen_range(1..4);
        let vertices = random_vertices(dof, rng.gen_range(1..30), &mut rng);
        let qa = JointVector::new((0..dof).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let qb = JointVector::new((0..dof).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let interval = rng.gen_range(0.02..0.3);

        assert_eq!(
            nearest_reference_index(&qb, &vertices),
            oracle_nearest(&qb, &vertices)
        );
        let lib = path_divergence(&qa, &qb, &vertices, interval);
        let orc = oracle_divergence(&qa, &qb, &vertices, interval);
        assert_eq!(lib, orc, "divergence mismatch: {lib} vs {orc}");
    }
}

#[test]
fn nearest_index_tie_keeps_smaller_index() {
    let vertices = vec![
        JointVector::new(vec![1.0, 0.0]),
        JointVector::new(vec![-1.0, 0.0]),
    ];
    // The origin is equidistant from both.
    let q = JointVector::new(vec![0.0, 0.0]);
    assert_eq!(nearest_reference_index(&q, &vertices), 0);
}

// ---------------------------------------------------------------------------
// A small controllable planar task for episode-level checks.
// ---------------------------------------------------------------------------

fn planar_chain() -> KinematicChain {
    KinematicChain {
        joints: vec![
            Joint {
                axis: Vector3::z_axis(),
                offset: Vector3::new(0.4, 0.0, 0.0),
                min: -3.0,
                max: 3.0,
                max_speed: 2.0,
            },
            Joint {
                axis: Vector3::z_axis(),
                offset: Vector3::new(0.35, 0.0, 0.0),
                min: -3.0,
                max: 3.0,
                max_speed: 1.5,
            },
        ],
        spheres: vec![CollisionSphere {
            link: 1,
            offset: Vector3::zeros(),
            radius: 0.05,
        }],
    }
}

fn planar_task(obstacles: Vec<reftraj_core::arm::BoxObstacle>) -> TaskSpec {
    TaskSpec {
        world: WorldModel {
            name: "planar".into(),
            chain: planar_chain(),
            obstacles,
        },
        start: JointVector::new(vec![0.0, 0.0]),
        goal: JointVector::new(vec![1.2, -0.8]),
        dt: 0.01,
        max_steps: 60,
        p_reset: 0.3,
        weights: RewardWeights::default(),
        curriculum: CurriculumConfig::default(),
        resample_interval: 0.05,
    }
}

fn straight_reference(task: &TaskSpec) -> ReferenceTrajectory {
    let raw = JointPath::new(vec![task.start.clone(), task.goal.clone()]);
    ReferenceTrajectory::from_path(raw, task.resample_interval)
}

#[test]
fn reward_equals_sum_of_independently_recomputed_terms() {
    let task = planar_task(Vec::new());
    let reference = straight_reference(&task);
    let mut env = Env::new(task.clone(), reference.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(307);

    for _ in 0..10 {
        env.reset(&mut rng);
        let mut prev_angles = env.state().angles.clone();
        let mut prev_commanded = JointVector::new(vec![0.0, 0.0]);
        let mut prev_nearest =
            oracle_nearest(&prev_angles, &reference.resampled.vertices);
        loop {
            let action: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.2..1.2)).collect();
            let result = env.step(&action);

            let scale = task.action_scale();
            let commanded = JointVector::new(
                action
                    .iter()
                    .zip(&scale)
                    .map(|(a, s)| a.clamp(-1.0, 1.0) * s)
                    .collect(),
            );
            let mut raw_next = JointVector::new(
                prev_angles
                    .as_slice()
                    .iter()
                    .zip(commanded.as_slice())
                    .map(|(t, v)| t + v * task.dt)
                    .collect(),
            );
            let limit = task.world.chain.check_joint_limits(&raw_next);
            task.world.chain.clamp_to_limits(&mut raw_next);

            let d_goal = raw_next.distance(&task.goal);
            let reached = d_goal <= env.curriculum.goal_radius();
            let collided = env.curriculum.collision_checking_enabled()
                && task.world.check_collision(&raw_next);
            let accel = commanded
                .as_slice()
                .iter()
                .zip(prev_commanded.as_slice())
                .map(|(v, p)| (v - p) * (v - p))
                .sum::<f64>()
                .sqrt()
                / task.dt;
            let divergence = oracle_divergence(
                &prev_angles,
                &raw_next,
                &reference.resampled.vertices,
                task.resample_interval,
            );
            let nearest = oracle_nearest(&raw_next, &reference.resampled.vertices);
            let progress = nearest as i64 - prev_nearest as i64;

            let w = &task.weights;
            let mut expect = w.goal_distance * d_goal
                + w.step_cost
                + w.acceleration * accel
                + w.path_distance * divergence
                + w.path_progress * progress as f64;
            if reached {
                expect += w.goal_bonus;
            }
            if collided {
                expect += env.curriculum.collision_weight(w.collision);
            }
            if limit {
                expect += w.joint_limit;
            }

            assert!(
                (result.reward - expect).abs() < 1e-12,
                "reward {} vs recomputed {expect}",
                result.reward
            );
            assert_eq!(result.flags.reached_goal, reached);
            assert_eq!(result.flags.collided, collided);
            assert_eq!(result.flags.limit_violation, limit);
            assert_eq!(result.flags.reference_progress, progress);

            prev_angles = env.state().angles.clone();
            prev_commanded = commanded;
            prev_nearest = nearest;
            if result.termination.is_some() {
                break;
            }
        }
    }
}

#[test]
fn progress_telescopes_to_endpoint_difference() {
    let task = planar_task(Vec::new());
    let reference = straight_reference(&task);
    let mut env = Env::new(task, reference.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(311);
    for _ in 0..20 {
        env.reset(&mut rng);
        let initial = oracle_nearest(&env.state().angles, &reference.resampled.vertices);
        let mut total = 0i64;
        loop {
            let action: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let result = env.step(&action);
            total += result.flags.reference_progress;
            if result.termination.is_some() {
                break;
            }
        }
        let fin = oracle_nearest(&env.state().angles, &reference.resampled.vertices);
        assert_eq!(total, fin as i64 - initial as i64);
    }
}

#[test]
fn dynamics_respect_speed_scale_and_limits() {
    let task = planar_task(Vec::new());
    let reference = straight_reference(&task);
    let mut env = Env::new(task.clone(), reference);
    let mut rng = ChaCha8Rng::seed_from_u64(313);
    env.reset_to(task.start.clone());
    for _ in 0..40 {
        let action: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let before = env.state().angles.clone();
        let result = env.step(&action);
        let after = env.state().angles.clone();
        let v = env.state().velocities.clone();
        for j in 0..2 {
            let max = task.world.chain.joints[j].max_speed;
            assert!(v[j].abs() <= max + 1e-12, "commanded speed exceeds limit");
            assert!(after[j] >= task.world.chain.joints[j].min - 1e-12);
            assert!(after[j] <= task.world.chain.joints[j].max + 1e-12);
            if !result.flags.limit_violation {
                // Un-clamped step is the plain Euler integral.
                assert!((after[j] - (before[j] + v[j] * task.dt)).abs() < 1e-12);
            }
        }
        if result.termination.is_some() {
            break;
        }
    }
}

#[test]
fn reset_mixes_start_and_reference_states_at_p_reset() {
    let task = planar_task(Vec::new());
    let reference = straight_reference(&task);
    let mut env = Env::new(task.clone(), reference.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(317);
    let trials = 4000;
    let mut on_reference = 0usize;
    for _ in 0..trials {
        env.reset(&mut rng);
        let angles = env.state().angles.clone();
        assert!(env.state().velocities.as_slice().iter().all(|v| *v == 0.0));
        if angles.distance(&task.start) < 1e-12 {
            continue;
        }
        on_reference += 1;
        assert!(
            reference
                .resampled
                .vertices
                .iter()
                .any(|v| v.distance(&angles) < 1e-12),
            "reset landed off the reference"
        );
    }
    let frac = on_reference as f64 / trials as f64;
    // The start vertex itself is one of the reference vertices, so the
    // observable on-reference fraction sits slightly below p_reset.
    let verts = reference.resampled.vertices.len() as f64;
    let expect = task.p_reset * (verts - 1.0) / verts;
    assert!(
        (frac - expect).abs() < 0.04,
        "on-reference fraction {frac:.3}, expected about {expect:.3}"
    );
}

#[test]
fn curriculum_schedule_is_monotone() {
    let mut env = Env::new(
        planar_task(Vec::new()),
        straight_reference(&planar_task(Vec::new())),
    );
    let mut last_radius = f64::INFINITY;
    let mut last_penalty = f64::INFINITY;
    for _ in 0..260 {
        let radius = env.curriculum.goal_radius();
        let penalty = env.curriculum.collision_weight(-10.0);
        assert!(radius <= last_radius);
        assert!(penalty <= last_penalty);
        last_radius = radius;
        last_penalty = penalty;
        env.curriculum.on_goal_reached();
    }
    assert_eq!(last_radius, 0.26);
    assert_eq!(last_penalty, -10.0);
}

#[test]
fn goal_termination_wins_over_timeout() {
    let mut task = planar_task(Vec::new());
    task.max_steps = 1;
    // Mature curriculum so the radius is tight but the goal is adjacent.
    task.curriculum.enabled = false;
    task.goal = JointVector::new(vec![0.01, 0.0]);
    let reference = straight_reference(&task);
    let mut env = Env::new(task, reference);
    env.reset_to(JointVector::new(vec![0.0, 0.0]));
    let result = env.step(&[1.0, 0.0]);
    assert_eq!(result.termination, Some(Termination::Goal));
}
