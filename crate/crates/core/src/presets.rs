//! Bundled worlds and tasks: a 6-DoF arm with bookshelf and open-computer
//! scenes, and a 2-DoF planar toy suite sized for fast desk-scale training.

use crate::arm::{BoxObstacle, CollisionSphere, Joint, JointVector, KinematicChain, WorldModel};
use crate::env::{CurriculumConfig, RewardWeights, TaskSpec};
use nalgebra::{Unit, Vector3};

/// Start configuration shared by the six bookshelf tasks, degrees.
pub const BOOKSHELF_START_DEG: [f64; 6] = [0.0, 8.0, 131.0, 0.0, 41.0, 180.0];
/// Bookshelf goal configurations, degrees: bottom/middle/top x left/right.
pub const BOOKSHELF_GOALS_DEG: [(&str, [f64; 6]); 6] = [
    ("bl", [-52.0, 59.0, 106.0, -141.0, 78.0, 170.0]),
    ("ml", [-52.0, 28.0, 111.0, -134.0, 60.0, 152.0]),
    ("tl", [-52.0, 13.0, 95.0, -111.0, 42.0, 117.0]),
    ("br", [-128.0, 59.0, 106.0, 141.0, 78.0, 190.0]),
    ("mr", [-128.0, 28.0, 111.0, 134.0, 60.0, 208.0]),
    ("tr", [-128.0, 13.0, 95.0, 111.0, 42.0, 243.0]),
];
/// Open-computer start and goal configurations, degrees.
pub const OPEN_COMPUTER_START_DEG: [f64; 6] = [-47.0, -8.0, 113.0, 0.0, 75.0, -138.0];
pub const OPEN_COMPUTER_GOAL_DEG: [f64; 6] = [-90.0, -1.0, 138.0, -180.0, 46.0, 88.0];

fn joint(axis: Vector3<f64>, offset: [f64; 3], min_deg: f64, max_deg: f64, speed_deg: f64) -> Joint {
    Joint {
        axis: Unit::new_normalize(axis),
        offset: Vector3::new(offset[0], offset[1], offset[2]),
        min: min_deg.to_radians(),
        max: max_deg.to_radians(),
        max_speed: speed_deg.to_radians(),
    }
}

fn sphere(link: usize, offset: [f64; 3], radius: f64) -> CollisionSphere {
    CollisionSphere {
        link,
        offset: Vector3::new(offset[0], offset[1], offset[2]),
        radius,
    }
}

/// Six-revolute vertical-mount arm patterned on a small industrial
/// manipulator: yaw base, two pitch links, roll-pitch-roll wrist.
pub fn six_dof_chain() -> KinematicChain {
    let z = Vector3::z_axis().into_inner();
    let y = Vector3::y_axis().into_inner();
    KinematicChain {
        joints: vec![
            joint(z, [0.0, 0.0, 0.35], -180.0, 180.0, 450.0),
            joint(y, [0.0, 0.0, 0.30], -120.0, 120.0, 450.0),
            joint(y, [0.0, 0.0, 0.25], -10.0, 165.0, 720.0),
            joint(z, [0.0, 0.0, 0.15], -200.0, 200.0, 540.0),
            joint(y, [0.0, 0.0, 0.10], -120.0, 120.0, 620.0),
            joint(z, [0.0, 0.0, 0.07], -270.0, 270.0, 720.0),
        ],
        spheres: vec![
            sphere(0, [0.0, 0.0, -0.10], 0.080),
            sphere(1, [0.0, 0.0, -0.22], 0.060),
            sphere(1, [0.0, 0.0, -0.08], 0.060),
            sphere(2, [0.0, 0.0, -0.19], 0.055),
            sphere(2, [0.0, 0.0, -0.06], 0.055),
            sphere(3, [0.0, 0.0, -0.07], 0.050),
            sphere(4, [0.0, 0.0, 0.0], 0.050),
            sphere(5, [0.0, 0.0, 0.0], 0.045),
        ],
    }
}

/// Bookshelf scene for the six reach-into-cell tasks.
pub fn bookshelf_world() -> WorldModel {
    WorldModel {
        name: "bookshelf".into(),
        chain: six_dof_chain(),
        obstacles: bookshelf_obstacles(),
    }
}

fn slab(center: [f64; 3], half: [f64; 3]) -> BoxObstacle {
    BoxObstacle::new(
        Vector3::new(center[0], center[1], center[2]),
        Vector3::new(half[0], half[1], half[2]),
    )
}

fn bookshelf_obstacles() -> Vec<BoxObstacle> {
    // Two-column, three-row open-top shelf in front of the arm. Each cell
    // is about 0.5 m wide, 0.2 m high and 0.3 m deep, assembled from thin
    // panels: three horizontal boards, two side walls, a centre divider and
    // a back wall. The six reach targets sit at the cell mouths.
    const PANEL: f64 = 0.0075; // half-thickness of every panel
    const FRONT_Y: f64 = -0.53;
    const BACK_Y: f64 = -0.83;
    const WALL_X: f64 = 0.52;
    const BOARD_Z: [f64; 3] = [0.017, 0.217, 0.417];
    const TOP_Z: f64 = 0.617; // side walls and back rise to here
    let y_mid = 0.5 * (FRONT_Y + BACK_Y);
    let y_half = 0.5 * (FRONT_Y - BACK_Y);
    let z_mid = 0.5 * (BOARD_Z[0] + TOP_Z);
    let z_half = 0.5 * (TOP_Z - BOARD_Z[0]) + PANEL;
    let mut boxes = Vec::new();
    for z in BOARD_Z {
        boxes.push(slab([0.0, y_mid, z], [WALL_X + PANEL, y_half, PANEL]));
    }
    for x in [-WALL_X, 0.0, WALL_X] {
        boxes.push(slab([x, y_mid, z_mid], [PANEL, y_half, z_half]));
    }
    boxes.push(slab([0.0, BACK_Y - PANEL, z_mid], [WALL_X + PANEL, PANEL, z_half]));
    boxes
}

/// Desk-with-laptop scene for the open-computer task.
pub fn open_computer_world() -> WorldModel {
    WorldModel {
        name: "open-computer".into(),
        chain: six_dof_chain(),
        obstacles: open_computer_obstacles(),
    }
}

fn open_computer_obstacles() -> Vec<BoxObstacle> {
    // A computer case lying open towards the arm: five panels form a box
    // whose mouth faces the robot, and two partial slabs inside stand in
    // for drive bays. The goal pose reaches between the slabs.
    vec![
        slab([0.0, -0.575, 0.09], [0.26, 0.175, 0.01]),  // bottom
        slab([0.0, -0.575, 0.61], [0.26, 0.175, 0.01]),  // top
        slab([-0.26, -0.575, 0.35], [0.01, 0.175, 0.26]), // left wall
        slab([0.26, -0.575, 0.35], [0.01, 0.175, 0.26]),  // right wall
        slab([0.0, -0.76, 0.35], [0.26, 0.01, 0.26]),     // back
        slab([0.0, -0.655, 0.20], [0.24, 0.09, 0.008]),   // lower bay
        slab([0.0, -0.655, 0.50], [0.24, 0.09, 0.008]),   // upper bay
    ]
}

/// Planar 2-DoF arm (both joints about z, links along x) used by both the toy
/// suite and goal generalization.
pub fn toy_chain() -> KinematicChain {
    let z = Vector3::z_axis().into_inner();
    KinematicChain {
        joints: vec![
            joint(z, [0.40, 0.0, 0.0], -171.0, 171.0, 171.88733853924697),
            joint(z, [0.35, 0.0, 0.0], -171.0, 171.0, 171.88733853924697),
        ],
        spheres: vec![
            sphere(0, [-0.30, 0.0, 0.0], 0.05),
            sphere(0, [-0.15, 0.0, 0.0], 0.05),
            sphere(0, [0.0, 0.0, 0.0], 0.05),
            sphere(1, [-0.25, 0.0, 0.0], 0.05),
            sphere(1, [-0.12, 0.0, 0.0], 0.05),
            sphere(1, [0.0, 0.0, 0.0], 0.05),
        ],
    }
}

/// Toy scene: the planar arm with a wall of three blocks across the sector
/// the bundled tasks sweep through (azimuths 42-62 degrees at radius 0.55).
/// The wall is thick enough along the sweep that cutting through costs far
/// more in collision penalty than the elbow-over detour costs in extra
/// steps, so the shaped return clearly prefers collision-free motion, while
/// the gap between the wall and the joint-limit boundary leaves a wide free
/// corridor for that detour.
pub fn toy_world() -> WorldModel {
    WorldModel {
        name: "toy".into(),
        chain: toy_chain(),
        obstacles: vec![
            slab([0.4087, 0.3680, 0.0], [0.06, 0.06, 0.10]),
            slab([0.3386, 0.4334, 0.0], [0.06, 0.06, 0.10]),
            slab([0.2582, 0.4856, 0.0], [0.06, 0.06, 0.10]),
        ],
    }
}

fn task(
    world: WorldModel,
    start: JointVector,
    goal: JointVector,
    dt: f64,
    max_steps: usize,
) -> TaskSpec {
    TaskSpec {
        world,
        start,
        goal,
        dt,
        max_steps,
        p_reset: 0.3,
        weights: RewardWeights::default(),
        curriculum: CurriculumConfig::default(),
        resample_interval: 0.05,
    }
}

/// One of the six bookshelf tasks by cell label (bl, ml, tl, br, mr, tr).
pub fn bookshelf_task(label: &str) -> Option<TaskSpec> {
    let goal = BOOKSHELF_GOALS_DEG
        .iter()
        .find(|(name, _)| *name == label)?
        .1;
    Some(task(
        bookshelf_world(),
        JointVector::from_degrees(&BOOKSHELF_START_DEG),
        JointVector::from_degrees(&goal),
        0.0035,
        300,
    ))
}

pub fn open_computer_task() -> TaskSpec {
    task(
        open_computer_world(),
        JointVector::from_degrees(&OPEN_COMPUTER_START_DEG),
        JointVector::from_degrees(&OPEN_COMPUTER_GOAL_DEG),
        0.0035,
        300,
    )
}

/// Start/goal pairs of the five toy tasks, radians.
pub const TOY_TASKS: [([f64; 2], [f64; 2]); 5] = [
    ([2.2, -0.5], [-0.6, 0.9]),
    ([2.0, 0.8], [-0.9, 0.5]),
    ([2.5, -1.0], [-0.3, 1.2]),
    ([1.8, -0.2], [-1.0, 1.0]),
    ([2.4, 0.3], [-0.5, 0.4]),
];

/// Toy task by 1-based index. The coarser control period keeps desk-scale
/// transits within the effective credit horizon of the discounted return
/// (roughly 20-30 steps at the default discount).
pub fn toy_task(index: usize) -> Option<TaskSpec> {
    let (start, goal) = TOY_TASKS.get(index.checked_sub(1)?)?;
    Some(task(
        toy_world(),
        JointVector::new(start.to_vec()),
        JointVector::new(goal.to_vec()),
        0.02,
        200,
    ))
}

/// Named lookup used by the CLI: bookshelf-{bl,ml,tl,br,mr,tr},
/// open-computer, toy1..toy5.
pub fn task_by_name(name: &str) -> Option<TaskSpec> {
    if let Some(label) = name.strip_prefix("bookshelf-") {
        return bookshelf_task(label);
    }
    if name == "open-computer" {
        return Some(open_computer_task());
    }
    if let Some(idx) = name.strip_prefix("toy") {
        return toy_task(idx.parse().ok()?);
    }
    None
}

pub fn preset_names() -> Vec<String> {
    let mut names: Vec<String> = BOOKSHELF_GOALS_DEG
        .iter()
        .map(|(label, _)| format!("bookshelf-{label}"))
        .collect();
    names.push("open-computer".into());
    names.extend((1..=5).map(|i| format!("toy{i}")));
    names
}

/// Workspace rectangle for goal generalization: goals are end-effector
/// targets `center + u*du + v*dv` with `du in [-w/2, w/2]`, `dv in [-h/2, h/2]`.
#[derive(Debug, Clone)]
pub struct GoalRectangle {
    pub center: Vector3<f64>,
    pub u_axis: Unit<Vector3<f64>>,
    pub v_axis: Unit<Vector3<f64>>,
    /// Extent along `u_axis`, meters.
    pub width: f64,
    /// Extent along `v_axis`, meters.
    pub height: f64,
}

impl GoalRectangle {
    /// Point at fractional coordinates in `[0, 1]^2` (0.5, 0.5 = center).
    pub fn point_at(&self, fu: f64, fv: f64) -> Vector3<f64> {
        self.center
            + self.u_axis.into_inner() * ((fu - 0.5) * self.width)
            + self.v_axis.into_inner() * ((fv - 0.5) * self.height)
    }
}

/// Default 100 mm x 100 mm goal rectangle in the toy arm's plane, placed away
/// from the toy obstacle.
pub fn toy_goal_rectangle(width_mm: f64, height_mm: f64) -> GoalRectangle {
    GoalRectangle {
        center: Vector3::new(0.52, 0.18, 0.0),
        u_axis: Vector3::x_axis(),
        v_axis: Vector3::y_axis(),
        width: width_mm / 1000.0,
        height: height_mm / 1000.0,
    }
}
