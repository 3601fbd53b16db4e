//! Kinematic chain model, workspace geometry, and collision checking.
//!
//! All angles are radians and all lengths are meters internally. World files
//! use degrees for angles (see [`WorldFile`]).

mod ik;

pub use ik::{position_jacobian, solve_ik, IkError};

use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArmError {
    #[error("joint vector has {got} entries, chain has {expected} joints")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("joint vector contains a non-finite entry")]
    NonFinite,
    #[error("invalid world model: {0}")]
    InvalidWorld(String),
    #[error("failed to parse world file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Joint angles (or a joint-space displacement) in radians, one entry per DoF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointVector(pub Vec<f64>);

impl JointVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn from_degrees(deg: &[f64]) -> Self {
        Self(deg.iter().map(|d| d.to_radians()).collect())
    }

    pub fn to_degrees(&self) -> Vec<f64> {
        self.0.iter().map(|r| r.to_degrees()).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Euclidean norm of the difference to `other`.
    pub fn distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Linear interpolation: `self + t * (other - self)`.
    pub fn lerp(&self, other: &Self, t: f64) -> Self {
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + t * (b - a))
                .collect(),
        )
    }
}

impl std::ops::Index<usize> for JointVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for JointVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Joint angles plus angular velocities; the controller state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub angles: JointVector,
    pub velocities: JointVector,
}

impl ArmState {
    pub fn at_rest(angles: JointVector) -> Self {
        let n = angles.len();
        Self {
            angles,
            velocities: JointVector::zeros(n),
        }
    }
}

/// One revolute joint: rotation about `axis` by the joint angle, then a rigid
/// offset to the next link frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Joint {
    pub axis: Unit<Vector3<f64>>,
    pub offset: Vector3<f64>,
    /// Inclusive position limits, radians.
    pub min: f64,
    pub max: f64,
    /// Maximum angular speed, rad/s.
    pub max_speed: f64,
}

/// Sphere sample attached to a link, used as the collision proxy.
///
/// `offset` is expressed in the link's own frame; the parent joint origin sits
/// at `-joint.offset` in that frame, so points along the link are negative
/// multiples of the link offset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollisionSphere {
    pub link: usize,
    pub offset: Vector3<f64>,
    pub radius: f64,
}

/// Serial chain of revolute joints with sphere collision samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KinematicChain {
    pub joints: Vec<Joint>,
    pub spheres: Vec<CollisionSphere>,
}

/// Forward-kinematics result: one frame per link plus the world-space centers
/// of every collision sphere (parallel to `chain.spheres`).
#[derive(Debug, Clone)]
pub struct FkResult {
    pub frames: Vec<Isometry3<f64>>,
    pub sphere_centers: Vec<Vector3<f64>>,
}

impl FkResult {
    pub fn end_effector(&self) -> Vector3<f64> {
        self.frames
            .last()
            .map(|f| f.translation.vector)
            .unwrap_or_else(Vector3::zeros)
    }
}

impl KinematicChain {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn check_dims(&self, q: &JointVector) -> Result<(), ArmError> {
        if q.len() != self.dof() {
            return Err(ArmError::DimensionMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        if !q.is_finite() {
            return Err(ArmError::NonFinite);
        }
        Ok(())
    }

    /// Frame of link `i` is `F_{i-1} * Rot(axis_i, q_i) * Trans(offset_i)`,
    /// with the base frame at the world origin.
    pub fn forward_kinematics(&self, q: &JointVector) -> Result<FkResult, ArmError> {
        self.check_dims(q)?;
        let mut frames = Vec::with_capacity(self.dof());
        let mut current = Isometry3::identity();
        for (joint, &angle) in self.joints.iter().zip(q.as_slice()) {
            let rot = UnitQuaternion::from_axis_angle(&joint.axis, angle);
            current *= Isometry3::from_parts(Translation3::identity(), rot);
            current *= Translation3::from(joint.offset);
            frames.push(current);
        }
        let sphere_centers = self
            .spheres
            .iter()
            .map(|s| frames[s.link].transform_point(&s.offset.into()).coords)
            .collect();
        Ok(FkResult {
            frames,
            sphere_centers,
        })
    }

    /// End-effector position only; avoids allocating frames.
    pub fn end_effector(&self, q: &JointVector) -> Result<Vector3<f64>, ArmError> {
        Ok(self.forward_kinematics(q)?.end_effector())
    }

    /// True iff any joint angle is outside its inclusive `[min, max]` range.
    pub fn check_joint_limits(&self, q: &JointVector) -> bool {
        self.joints
            .iter()
            .zip(q.as_slice())
            .any(|(j, &a)| a < j.min || a > j.max)
    }

    pub fn clamp_to_limits(&self, q: &mut JointVector) {
        for (j, a) in self.joints.iter().zip(q.0.iter_mut()) {
            *a = a.clamp(j.min, j.max);
        }
    }

    pub fn max_speeds(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.max_speed).collect()
    }

    /// Joint-space diameter of the limit box; a coarse workspace bound.
    pub fn limit_span(&self) -> f64 {
        self.joints
            .iter()
            .map(|j| (j.max - j.min) * (j.max - j.min))
            .sum::<f64>()
            .sqrt()
    }

    fn validate(&self) -> Result<(), ArmError> {
        for (i, j) in self.joints.iter().enumerate() {
            if j.min >= j.max {
                return Err(ArmError::InvalidWorld(format!(
                    "joint {i}: min {} >= max {}",
                    j.min, j.max
                )));
            }
            if j.max_speed <= 0.0 {
                return Err(ArmError::InvalidWorld(format!("joint {i}: max_speed <= 0")));
            }
        }
        for (i, s) in self.spheres.iter().enumerate() {
            if s.radius <= 0.0 {
                return Err(ArmError::InvalidWorld(format!("sphere {i}: radius <= 0")));
            }
            if s.link >= self.joints.len() {
                return Err(ArmError::InvalidWorld(format!(
                    "sphere {i}: link {} out of range",
                    s.link
                )));
            }
        }
        Ok(())
    }
}

/// Axis-aligned box obstacle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxObstacle {
    pub center: Vector3<f64>,
    pub half_extents: Vector3<f64>,
}

impl BoxObstacle {
    pub fn new(center: Vector3<f64>, half_extents: Vector3<f64>) -> Self {
        Self {
            center,
            half_extents,
        }
    }

    /// Distance from a point to the box surface; zero inside.
    pub fn distance_to_point(&self, p: &Vector3<f64>) -> f64 {
        let d = (p - self.center).abs() - self.half_extents;
        Vector3::new(d.x.max(0.0), d.y.max(0.0), d.z.max(0.0)).norm()
    }
}

/// Kinematic chain plus obstacle set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldModel {
    pub name: String,
    pub chain: KinematicChain,
    pub obstacles: Vec<BoxObstacle>,
}

impl WorldModel {
    /// True iff any collision sphere intersects any obstacle (strictly:
    /// distance < radius, so touching does not count).
    pub fn check_collision(&self, q: &JointVector) -> bool {
        if self.obstacles.is_empty() {
            return false;
        }
        let fk = match self.chain.forward_kinematics(q) {
            Ok(fk) => fk,
            Err(_) => return true,
        };
        self.collision_at(&fk)
    }

    fn collision_at(&self, fk: &FkResult) -> bool {
        fk.sphere_centers
            .iter()
            .zip(&self.chain.spheres)
            .any(|(c, s)| {
                self.obstacles
                    .iter()
                    .any(|b| b.distance_to_point(c) < s.radius)
            })
    }

    /// Checks the straight joint-space segment `qa -> qb` at a sample spacing
    /// of at most `resolution` radians, endpoints included.
    pub fn segment_collision_free(
        &self,
        qa: &JointVector,
        qb: &JointVector,
        resolution: f64,
    ) -> bool {
        debug_assert!(resolution > 0.0);
        if self.obstacles.is_empty() {
            return true;
        }
        let dist = qa.distance(qb);
        let steps = (dist / resolution).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            if self.check_collision(&qa.lerp(qb, t)) {
                return false;
            }
        }
        true
    }

    pub fn validate(&self) -> Result<(), ArmError> {
        self.chain.validate()?;
        for (i, b) in self.obstacles.iter().enumerate() {
            if b.half_extents.iter().any(|&h| h <= 0.0) {
                return Err(ArmError::InvalidWorld(format!(
                    "obstacle {i}: non-positive half extent"
                )));
            }
        }
        Ok(())
    }
}

// --- world file schema (degrees and meters on disk) ---

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointFile {
    pub axis: [f64; 3],
    pub offset: [f64; 3],
    pub min_deg: f64,
    pub max_deg: f64,
    /// Degrees per second.
    pub max_speed: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SphereFile {
    pub link: usize,
    pub offset: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainFile {
    pub joints: Vec<JointFile>,
    pub spheres: Vec<SphereFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObstacleFile {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldFile {
    pub name: String,
    pub chain: ChainFile,
    pub obstacles: Vec<ObstacleFile>,
}

impl WorldFile {
    pub fn parse(json: &str) -> Result<WorldModel, ArmError> {
        let file: WorldFile = serde_json::from_str(json)?;
        file.into_world()
    }

    pub fn into_world(self) -> Result<WorldModel, ArmError> {
        let joints = self
            .chain
            .joints
            .iter()
            .map(|j| {
                let axis = Vector3::new(j.axis[0], j.axis[1], j.axis[2]);
                if axis.norm() == 0.0 {
                    return Err(ArmError::InvalidWorld("zero joint axis".into()));
                }
                Ok(Joint {
                    axis: Unit::new_normalize(axis),
                    offset: Vector3::new(j.offset[0], j.offset[1], j.offset[2]),
                    min: j.min_deg.to_radians(),
                    max: j.max_deg.to_radians(),
                    max_speed: j.max_speed.to_radians(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let spheres = self
            .chain
            .spheres
            .iter()
            .map(|s| CollisionSphere {
                link: s.link,
                offset: Vector3::new(s.offset[0], s.offset[1], s.offset[2]),
                radius: s.radius,
            })
            .collect();
        let obstacles = self
            .obstacles
            .iter()
            .map(|o| BoxObstacle {
                center: Vector3::new(o.center[0], o.center[1], o.center[2]),
                half_extents: Vector3::new(o.half_extents[0], o.half_extents[1], o.half_extents[2]),
            })
            .collect();
        let world = WorldModel {
            name: self.name,
            chain: KinematicChain { joints, spheres },
            obstacles,
        };
        world.validate()?;
        Ok(world)
    }

    pub fn from_world(world: &WorldModel) -> Self {
        WorldFile {
            name: world.name.clone(),
            chain: ChainFile {
                joints: world
                    .chain
                    .joints
                    .iter()
                    .map(|j| JointFile {
                        axis: [j.axis.x, j.axis.y, j.axis.z],
                        offset: [j.offset.x, j.offset.y, j.offset.z],
                        min_deg: j.min.to_degrees(),
                        max_deg: j.max.to_degrees(),
                        max_speed: j.max_speed.to_degrees(),
                    })
                    .collect(),
                spheres: world
                    .chain
                    .spheres
                    .iter()
                    .map(|s| SphereFile {
                        link: s.link,
                        offset: [s.offset.x, s.offset.y, s.offset.z],
                        radius: s.radius,
                    })
                    .collect(),
            },
            obstacles: world
                .obstacles
                .iter()
                .map(|b| ObstacleFile {
                    center: [b.center.x, b.center.y, b.center.z],
                    half_extents: [b.half_extents.x, b.half_extents.y, b.half_extents.z],
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_chain(offsets: &[[f64; 3]]) -> KinematicChain {
        KinematicChain {
            joints: offsets
                .iter()
                .map(|o| Joint {
                    axis: Vector3::z_axis(),
                    offset: Vector3::new(o[0], o[1], o[2]),
                    min: -std::f64::consts::PI,
                    max: std::f64::consts::PI,
                    max_speed: 1.0,
                })
                .collect(),
            spheres: vec![],
        }
    }

    #[test]
    fn fk_zero_angles_sums_offsets() {
        let chain = straight_chain(&[[0.0, 0.0, 0.3], [0.0, 0.0, 0.25], [0.0, 0.0, 0.2]]);
        let fk = chain
            .forward_kinematics(&JointVector::zeros(3))
            .unwrap();
        let ee = fk.end_effector();
        assert!((ee - Vector3::new(0.0, 0.0, 0.75)).norm() < 1e-12);
    }

    #[test]
    fn fk_base_rotation_by_pi_negates_xy() {
        // Planar chain along +x so downstream positions have nonzero x.
        let mut chain = straight_chain(&[[0.4, 0.0, 0.0], [0.3, 0.1, 0.0]]);
        chain.spheres.push(CollisionSphere {
            link: 1,
            offset: Vector3::new(-0.15, 0.0, 0.0),
            radius: 0.05,
        });
        let q = JointVector::new(vec![0.7, -0.3]);
        let mut q_flipped = q.clone();
        q_flipped[0] += std::f64::consts::PI;
        let a = chain.forward_kinematics(&q).unwrap();
        let b = chain.forward_kinematics(&q_flipped).unwrap();
        for (pa, pb) in a
            .frames
            .iter()
            .map(|f| f.translation.vector)
            .chain(a.sphere_centers.iter().copied())
            .zip(
                b.frames
                    .iter()
                    .map(|f| f.translation.vector)
                    .chain(b.sphere_centers.iter().copied()),
            )
        {
            assert!((pa.x + pb.x).abs() < 1e-12);
            assert!((pa.y + pb.y).abs() < 1e-12);
            assert!((pa.z - pb.z).abs() < 1e-12);
        }
    }

    #[test]
    fn fk_dimension_mismatch() {
        let chain = straight_chain(&[[0.0, 0.0, 0.3]]);
        assert!(matches!(
            chain.forward_kinematics(&JointVector::zeros(2)),
            Err(ArmError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn joint_limits_inclusive_bounds() {
        let mut chain = straight_chain(&[[0.0, 0.0, 0.3], [0.0, 0.0, 0.3]]);
        chain.joints[0].min = -1.0;
        chain.joints[0].max = 1.0;
        assert!(!chain.check_joint_limits(&JointVector::new(vec![-1.0, 0.0])));
        assert!(!chain.check_joint_limits(&JointVector::new(vec![1.0, 0.0])));
        assert!(chain.check_joint_limits(&JointVector::new(vec![1.01, 0.0])));
        assert!(!chain.check_joint_limits(&JointVector::new(vec![0.0, 0.0])));
    }

    #[test]
    fn collision_strict_boundary() {
        let mut chain = straight_chain(&[[0.0, 0.0, 0.5]]);
        chain.spheres.push(CollisionSphere {
            link: 0,
            offset: Vector3::zeros(),
            radius: 0.05,
        });
        // Sphere center at (0,0,0.5); box face at z = 0.55 exactly radius away.
        let touching = WorldModel {
            name: "t".into(),
            chain: chain.clone(),
            obstacles: vec![BoxObstacle::new(
                Vector3::new(0.0, 0.0, 0.65),
                Vector3::new(0.2, 0.2, 0.1),
            )],
        };
        assert!(!touching.check_collision(&JointVector::zeros(1)));

        let inside = WorldModel {
            name: "t".into(),
            chain,
            obstacles: vec![BoxObstacle::new(
                Vector3::new(0.0, 0.0, 0.5),
                Vector3::new(0.2, 0.2, 0.1),
            )],
        };
        assert!(inside.check_collision(&JointVector::zeros(1)));
    }

    #[test]
    fn empty_world_never_collides() {
        let world = WorldModel {
            name: "empty".into(),
            chain: straight_chain(&[[0.0, 0.0, 0.3]]),
            obstacles: vec![],
        };
        assert!(!world.check_collision(&JointVector::new(vec![2.5])));
        assert!(world.segment_collision_free(
            &JointVector::new(vec![-3.0]),
            &JointVector::new(vec![3.0]),
            0.02
        ));
    }

    #[test]
    fn degenerate_segment_is_point_check() {
        let world = WorldModel {
            name: "empty".into(),
            chain: straight_chain(&[[0.0, 0.0, 0.3]]),
            obstacles: vec![],
        };
        let q = JointVector::new(vec![0.4]);
        assert!(world.segment_collision_free(&q, &q, 0.02));
    }

    #[test]
    fn world_file_round_trip() {
        let json = r#"{
            "name": "demo",
            "chain": {
                "joints": [
                    {"axis": [0,0,1], "offset": [0,0,0.3], "min_deg": -180, "max_deg": 180, "max_speed": 90}
                ],
                "spheres": [
                    {"link": 0, "offset": [0,0,-0.1], "radius": 0.05}
                ]
            },
            "obstacles": [
                {"center": [0.5,0,0.3], "half_extents": [0.1,0.1,0.1]}
            ]
        }"#;
        let world = WorldFile::parse(json).unwrap();
        assert_eq!(world.chain.dof(), 1);
        assert!((world.chain.joints[0].max_speed - 90f64.to_radians()).abs() < 1e-12);
        let back = serde_json::to_string(&WorldFile::from_world(&world)).unwrap();
        let world2 = WorldFile::parse(&back).unwrap();
        assert_eq!(world2.chain.joints[0].min, world.chain.joints[0].min);
    }
}
