//! Planner soundness checks: shortcut never lengthens or breaks paths,
//! resampling preserves structure, and planning succeeds where it must.

use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reftraj_core::arm::JointVector;
use reftraj_core::planner::{
    path_length, resample_path, rrt_plan, shortcut, JointPath, RrtConfig, ShortcutConfig,
};
use reftraj_core::presets::{bookshelf_task, bookshelf_world};

fn random_free_config(world: &reftraj_core::arm::WorldModel, rng: &mut ChaCha8Rng) -> JointVector {
    loop {
        let q = JointVector::new(
            world
                .chain
                .joints
                .iter()
                .map(|j| rng.gen_range(j.min..=j.max))
                .collect(),
        );
        if !world.check_collision(&q) {
            return q;
        }
    }
}

/// Random short-edged polyline whose every edge passes the library's own
/// segment check (the shortcut precondition).
fn random_free_polyline(
    world: &reftraj_core::arm::WorldModel,
    vertices: usize,
    rng: &mut ChaCha8Rng,
) -> JointPath {
    let mut points = vec![random_free_config(world, rng)];
    while points.len() < vertices {
        let last = points.last().unwrap().clone();
        let candidate = JointVector::new(
            last.as_slice()
                .iter()
                .zip(&world.chain.joints)
                .map(|(v, j)| (v + rng.gen_range(-0.25..0.25)).clamp(j.min, j.max))
                .collect(),
        );
        if last.distance(&candidate) < 1e-9 {
            continue;
        }
        if world.segment_collision_free(&last, &candidate, 0.02) {
            points.push(candidate);
        }
    }
    JointPath::new(points)
}

#[test]
fn shortcut_never_lengthens_over_many_random_paths() {
    let world = bookshelf_world();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let cfg = ShortcutConfig {
        attempts: 40,
        subdivision_distance: 0.02,
    };
    for _ in 0..1000 {
        let path = random_free_polyline(&world, 4, &mut rng);
        let before = path_length(&path);
        let smoothed = shortcut(&world, &path, &cfg, &mut rng);
        let after = path_length(&smoothed);
        assert!(after <= before + 1e-12, "shortcut lengthened a path");
        assert_eq!(smoothed.first(), path.first());
        assert_eq!(smoothed.last(), path.last());
    }
}

#[test]
fn shortcut_output_edges_stay_collision_free() {
    let world = bookshelf_world();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let cfg = ShortcutConfig::default();
    for _ in 0..50 {
        let path = random_free_polyline(&world, 6, &mut rng);
        let smoothed = shortcut(&world, &path, &cfg, &mut rng);
        for w in smoothed.vertices.windows(2) {
            assert!(world.segment_collision_free(&w[0], &w[1], 0.02));
        }
    }
}

#[test]
fn shortcut_is_deterministic_for_a_fixed_seed() {
    let world = bookshelf_world();
    let mut gen_rng = ChaCha8Rng::seed_from_u64(31);
    let path = random_free_polyline(&world, 8, &mut gen_rng);
    let cfg = ShortcutConfig::default();
    let mut rng_a = ChaCha8Rng::seed_from_u64(99);
    let mut rng_b = ChaCha8Rng::seed_from_u64(99);
    let a = shortcut(&world, &path, &cfg, &mut rng_a);
    let b = shortcut(&world, &path, &cfg, &mut rng_b);
    assert_eq!(a.vertices, b.vertices);
}

#[test]
fn rrt_succeeds_on_every_seed_in_empty_world() {
    let mut world = bookshelf_world();
    world.obstacles.clear();
    let cfg = RrtConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for seed in 0..100u64 {
        let start = random_free_config(&world, &mut rng);
        let goal = random_free_config(&world, &mut rng);
        let mut plan_rng = ChaCha8Rng::seed_from_u64(seed);
        let path = rrt_plan(&world, &start, &goal, &cfg, &mut plan_rng)
            .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert_eq!(path.first(), &start);
        assert_eq!(path.last(), &goal);
    }
}

#[test]
fn straight_segment_shortcut_reduces_to_two_vertices_in_empty_world() {
    let mut world = bookshelf_world();
    world.obstacles.clear();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let start = random_free_config(&world, &mut rng);
    let goal = random_free_config(&world, &mut rng);
    let mut plan_rng = ChaCha8Rng::seed_from_u64(0);
    let path = rrt_plan(&world, &start, &goal, &RrtConfig::default(), &mut plan_rng).unwrap();
    let cfg = ShortcutConfig {
        attempts: 5000,
        subdivision_distance: 0.02,
    };
    let smoothed = shortcut(&world, &path, &cfg, &mut plan_rng);
    assert_eq!(smoothed.len(), 2, "unlimited shortcutting should leave a segment");
    let direct = start.distance(&goal);
    assert!((path_length(&smoothed) - direct).abs() < 1e-12);
}

#[test]
fn ml_reach_task_plans_on_nearly_every_seed() {
    let task = bookshelf_task("ml").unwrap();
    let cfg = RrtConfig::default();
    let mut ok = 0usize;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if rrt_plan(&task.world, &task.start, &task.goal, &cfg, &mut rng).is_ok() {
            ok += 1;
        }
    }
    assert!(ok >= 95, "only {ok}/100 seeds planned the shelf reach");
}

#[test]
fn resample_twice_barely_moves_vertices() {
    // Re-resampling keeps the endpoints, never adds vertices, and every new
    // vertex stays within one interval of a vertex of the first pass.
    let world = bookshelf_world();
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    for _ in 0..50 {
        let path = random_free_polyline(&world, 5, &mut rng);
        let interval = rng.gen_range(0.03..0.2);
        let once = resample_path(&path, interval);
        let twice = resample_path(&once, interval);
        assert_eq!(once.first(), twice.first());
        assert_eq!(once.last(), twice.last());
        assert!(twice.len() <= once.len());
        for v in &twice.vertices {
            let nearest = once
                .vertices
                .iter()
                .map(|u| u.distance(v))
                .fold(f64::INFINITY, f64::min);
            assert!(nearest <= interval + 1e-9, "vertex drifted by {nearest}");
        }
    }
}

#[test]
fn csv_round_trip_preserves_paths() {
    let world = bookshelf_world();
    let mut rng = ChaCha8Rng::seed_from_u64(59);
    let path = random_free_polyline(&world, 7, &mut rng);
    let csv = path.to_csv_degrees();
    let back = JointPath::from_csv_degrees(&csv).unwrap();
    assert_eq!(back.len(), path.len());
    for (a, b) in path.vertices.iter().zip(&back.vertices) {
        assert!(a.distance(b) < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Gap bound, endpoint preservation and length preservation for the
    /// regular-interval resampler over arbitrary short polylines.
    #[test]
    fn resample_respects_gap_bound(
        raw in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 2..8),
        interval in 0.05f64..0.5,
    ) {
        let mut vertices: Vec<JointVector> = Vec::new();
        for v in raw {
            let q = JointVector::new(v);
            if vertices.last().map_or(true, |p: &JointVector| p.distance(&q) > 1e-9) {
                vertices.push(q);
            }
        }
        prop_assume!(vertices.len() >= 2);
        let path = JointPath::new(vertices);
        let dense = resample_path(&path, interval);
        prop_assert_eq!(dense.first(), path.first());
        prop_assert_eq!(dense.last(), path.last());
        for w in dense.vertices.windows(2) {
            prop_assert!(w[0].distance(&w[1]) <= interval + 1e-9);
        }
        prop_assert!(path_length(&dense) <= path_length(&path) + 1e-9);
    }
}
