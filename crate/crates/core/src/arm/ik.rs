//! Inverse kinematics via damped least squares on the position Jacobian.

use super::{ArmError, JointVector, KinematicChain};
use nalgebra::{DMatrix, DVector, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IkError {
    #[error(transparent)]
    Arm(#[from] ArmError),
    #[error("no solution within tolerance after {iterations} iterations (residual {residual:.6} m)")]
    NotConverged { iterations: usize, residual: f64 },
}

/// Damping added to `J Jᵀ` so near-singular poses stay stable (meters).
const DLS_DAMPING: f64 = 0.05;
/// Per-iteration joint-space step cap, radians.
const MAX_STEP: f64 = 0.5;

/// Analytic 3×n Jacobian of the end-effector position.
///
/// Column i is `a_i × (p_ee - p_i)` where `a_i` is joint i's rotation axis in
/// world coordinates and `p_i` the joint's origin (the previous link frame).
pub fn position_jacobian(chain: &KinematicChain, q: &JointVector) -> Result<DMatrix<f64>, ArmError> {
    let fk = chain.forward_kinematics(q)?;
    let p_ee = fk.end_effector();
    let n = chain.dof();
    let mut jac = DMatrix::zeros(3, n);
    for i in 0..n {
        let (origin, axis_world) = if i == 0 {
            (Vector3::zeros(), chain.joints[0].axis.into_inner())
        } else {
            let prev = &fk.frames[i - 1];
            (
                prev.translation.vector,
                prev.rotation * chain.joints[i].axis.into_inner(),
            )
        };
        let col = axis_world.cross(&(p_ee - origin));
        jac.set_column(i, &col.into());
    }
    Ok(jac)
}

/// Iterates `dq = Jᵀ (J Jᵀ + λ² I)⁻¹ e` from `seed` until the end effector is
/// within `tol` meters of `target`, clamping each iterate to the joint limits.
pub fn solve_ik(
    chain: &KinematicChain,
    target: &Vector3<f64>,
    seed: &JointVector,
    tol: f64,
    max_iters: usize,
) -> Result<JointVector, IkError> {
    let mut q = seed.clone();
    chain.check_dims(&q)?;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let p = chain.end_effector(&q)?;
        let err = target - p;
        residual = err.norm();
        if residual <= tol {
            return Ok(q);
        }
        let jac = position_jacobian(chain, &q)?;
        let jjt =
            &jac * jac.transpose() + DMatrix::identity(3, 3) * (DLS_DAMPING * DLS_DAMPING);
        let rhs = jjt
            .lu()
            .solve(&DVector::from_column_slice(err.as_slice()))
            .unwrap_or_else(|| DVector::zeros(3));
        let mut dq = jac.transpose() * rhs;
        let step = dq.norm();
        if step > MAX_STEP {
            dq *= MAX_STEP / step;
        }
        for i in 0..q.len() {
            q[i] += dq[i];
        }
        chain.clamp_to_limits(&mut q);
    }
    Err(IkError::NotConverged {
        iterations: max_iters,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::Joint;

    fn planar_two_link() -> KinematicChain {
        KinematicChain {
            joints: vec![
                Joint {
                    axis: Vector3::z_axis(),
                    offset: Vector3::new(0.4, 0.0, 0.0),
                    min: -std::f64::consts::PI,
                    max: std::f64::consts::PI,
                    max_speed: 1.0,
                },
                Joint {
                    axis: Vector3::z_axis(),
                    offset: Vector3::new(0.35, 0.0, 0.0),
                    min: -std::f64::consts::PI,
                    max: std::f64::consts::PI,
                    max_speed: 1.0,
                },
            ],
            spheres: vec![],
        }
    }

    #[test]
    fn jacobian_planar_analytic_form() {
        // For a planar 2R arm the Jacobian has the classic closed form.
        let chain = planar_two_link();
        let (l1, l2) = (0.4, 0.35);
        let (q1, q2) = (0.3, -0.8);
        let jac = position_jacobian(&chain, &JointVector::new(vec![q1, q2])).unwrap();
        let s1 = q1.sin();
        let c1 = q1.cos();
        let s12 = (q1 + q2).sin();
        let c12 = (q1 + q2).cos();
        assert!((jac[(0, 0)] - (-l1 * s1 - l2 * s12)).abs() < 1e-12);
        assert!((jac[(1, 0)] - (l1 * c1 + l2 * c12)).abs() < 1e-12);
        assert!((jac[(0, 1)] - (-l2 * s12)).abs() < 1e-12);
        assert!((jac[(1, 1)] - (l2 * c12)).abs() < 1e-12);
    }

    #[test]
    fn ik_reaches_reachable_target() {
        let chain = planar_two_link();
        let target = chain
            .end_effector(&JointVector::new(vec![0.9, -1.2]))
            .unwrap();
        let sol = solve_ik(
            &chain,
            &target,
            &JointVector::new(vec![0.1, 0.1]),
            1e-5,
            500,
        )
        .unwrap();
        let reached = chain.end_effector(&sol).unwrap();
        assert!((reached - target).norm() <= 1e-5);
        assert!(!chain.check_joint_limits(&sol));
    }

    #[test]
    fn ik_unreachable_target_errors() {
        let chain = planar_two_link();
        let err = solve_ik(
            &chain,
            &Vector3::new(2.0, 0.0, 0.0),
            &JointVector::zeros(2),
            1e-5,
            200,
        );
        assert!(matches!(err, Err(IkError::NotConverged { .. })));
    }
}
