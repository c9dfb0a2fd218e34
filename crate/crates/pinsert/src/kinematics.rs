//! Serial-arm kinematics: forward kinematics over a DH table, the geometric
//! Jacobian, and inverse kinematics by iterative relinearization of the
//! pose constraint.
//!
//! The IK step solves, at the current iterate, the least-norm problem
//! `min ‖q − q_prev‖²_Q  s.t.  J(q_k)·q = J(q_k)·q_k + (x_target ⊖ Γ(q_k))`
//! in closed form through damped normal equations, and repeats until the
//! translation and rotation residuals drop below tolerance. Targets are
//! assumed to lie a short step from `Γ(q_prev)`; the Cartesian tracker
//! guarantees that by bounding per-step motion.

use crate::geometry::{self, Pose, Transform};
use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One Denavit-Hartenberg row (standard convention):
/// `RotZ(q + theta_offset) · TransZ(d) · TransX(a) · RotX(alpha)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DhRow {
    /// Link length, meters.
    pub a: f64,
    /// Link twist, radians.
    pub alpha: f64,
    /// Link offset, meters.
    pub d: f64,
    /// Joint angle offset, radians.
    pub theta_offset: f64,
}

/// Immutable description of a serial revolute arm.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArmModel {
    dh: Vec<DhRow>,
    joint_limits: Vec<[f64; 2]>,
}

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("expected {expected} joint values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("joint limit [{lo}, {hi}] outside [-pi, pi] at joint {joint}")]
    LimitOutOfRange { joint: usize, lo: f64, hi: f64 },
    #[error("model needs at least one joint")]
    Empty,
}

#[derive(Debug, Error, PartialEq)]
pub enum IkError {
    #[error("no convergence after {iterations} iterations (translation residual {translation_residual:.3e} m, rotation residual {rotation_residual:.3e} rad)")]
    NoConvergence {
        iterations: usize,
        translation_residual: f64,
        rotation_residual: f64,
    },
    #[error("Jacobian is singular (smallest singular value {sigma_min:.3e})")]
    SingularJacobian { sigma_min: f64 },
    #[error("solution violates joint limits at joint {joint}")]
    LimitViolation { joint: usize },
}

/// IK error annotated with the trajectory step where it occurred.
#[derive(Debug, Error, PartialEq)]
#[error("inverse kinematics failed at trajectory step {step}: {source}")]
pub struct TrajectoryIkError {
    pub step: usize,
    #[source]
    pub source: IkError,
}

impl ArmModel {
    pub fn new(dh: Vec<DhRow>, joint_limits: Vec<[f64; 2]>) -> Result<Self, KinematicsError> {
        if dh.is_empty() {
            return Err(KinematicsError::Empty);
        }
        if dh.len() != joint_limits.len() {
            return Err(KinematicsError::DimensionMismatch {
                expected: dh.len(),
                got: joint_limits.len(),
            });
        }
        for (i, lim) in joint_limits.iter().enumerate() {
            let pi = std::f64::consts::PI;
            if lim[0] < -pi - 1e-12 || lim[1] > pi + 1e-12 || lim[0] > lim[1] {
                return Err(KinematicsError::LimitOutOfRange {
                    joint: i,
                    lo: lim[0],
                    hi: lim[1],
                });
            }
        }
        Ok(ArmModel { dh, joint_limits })
    }

    /// The reference six-joint arm used throughout the crate: link lengths of
    /// roughly 0.61 m and 0.57 m with a spherical-ish wrist, in the standard
    /// DH convention.
    pub fn reference_6dof() -> Self {
        let pi2 = std::f64::consts::FRAC_PI_2;
        let dh = vec![
            DhRow { a: 0.0, alpha: pi2, d: 0.1273, theta_offset: 0.0 },
            DhRow { a: -0.612, alpha: 0.0, d: 0.0, theta_offset: 0.0 },
            DhRow { a: -0.5723, alpha: 0.0, d: 0.0, theta_offset: 0.0 },
            DhRow { a: 0.0, alpha: pi2, d: 0.163941, theta_offset: 0.0 },
            DhRow { a: 0.0, alpha: -pi2, d: 0.1157, theta_offset: 0.0 },
            DhRow { a: 0.0, alpha: 0.0, d: 0.0922, theta_offset: 0.0 },
        ];
        let pi = std::f64::consts::PI;
        let limits = vec![[-pi, pi]; 6];
        ArmModel::new(dh, limits).expect("reference model is valid")
    }

    pub fn n_joints(&self) -> usize {
        self.dh.len()
    }

    pub fn dh(&self) -> &[DhRow] {
        &self.dh
    }

    pub fn joint_limits(&self) -> &[[f64; 2]] {
        &self.joint_limits
    }

    fn check_dim(&self, q: &DVector<f64>) -> Result<(), KinematicsError> {
        if q.len() != self.n_joints() {
            return Err(KinematicsError::DimensionMismatch {
                expected: self.n_joints(),
                got: q.len(),
            });
        }
        Ok(())
    }
}

/// Joint positions and velocities at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
}

/// Timed joint states with uniform spacing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JointTrajectory {
    pub steps: Vec<(f64, JointState)>,
}

impl JointTrajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.steps.first(), self.steps.last()) {
            (Some(a), Some(b)) => b.0 - a.0,
            _ => 0.0,
        }
    }

    /// CSV rows `time, q1..qn, qd1..qdn`.
    pub fn to_csv(&self) -> String {
        let n = self.steps.first().map_or(0, |s| s.1.q.len());
        let mut out = String::from("time");
        for i in 1..=n {
            out.push_str(&format!(",q{i}"));
        }
        for i in 1..=n {
            out.push_str(&format!(",qd{i}"));
        }
        out.push('\n');
        for (t, s) in &self.steps {
            out.push_str(&format!("{t}"));
            for v in s.q.iter() {
                out.push_str(&format!(",{v}"));
            }
            for v in s.qd.iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn dh_transform(row: &DhRow, q: f64) -> Transform {
    let theta = q + row.theta_offset;
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = row.alpha.sin_cos();
    // RotZ(theta) * TransZ(d) * TransX(a) * RotX(alpha), written out.
    let rot = nalgebra::Matrix3::new(
        ct, -st * ca, st * sa, //
        st, ct * ca, -ct * sa, //
        0.0, sa, ca,
    );
    let t = Vector3::new(row.a * ct, row.a * st, row.d);
    Transform { rot, t }
}

/// Transforms from the base to each joint frame, with the base at index 0 and
/// the end-effector at index `n`.
pub fn link_transforms(model: &ArmModel, q: &DVector<f64>) -> Result<Vec<Transform>, KinematicsError> {
    model.check_dim(q)?;
    let mut out = Vec::with_capacity(model.n_joints() + 1);
    let mut acc = Transform::identity();
    out.push(acc);
    for (row, &qi) in model.dh().iter().zip(q.iter()) {
        acc = geometry::compose(&acc, &dh_transform(row, qi));
        out.push(acc);
    }
    Ok(out)
}

/// End-effector pose of the chain at joint positions `q`.
pub fn forward_kinematics(model: &ArmModel, q: &DVector<f64>) -> Result<Pose, KinematicsError> {
    let frames = link_transforms(model, q)?;
    Ok(Pose::from_transform(frames.last().expect("nonempty chain")))
}

/// Geometric Jacobian: column `i` is the end-effector twist
/// `[linear; angular]` per unit velocity of joint `i`, in the world frame.
pub fn jacobian(model: &ArmModel, q: &DVector<f64>) -> Result<DMatrix<f64>, KinematicsError> {
    let frames = link_transforms(model, q)?;
    let n = model.n_joints();
    let p_eff = frames[n].t;
    let mut jac = DMatrix::zeros(6, n);
    for i in 0..n {
        // Revolute joint i rotates about the Z axis of frame i.
        let z = frames[i].rot.column(2).into_owned();
        let lin = z.cross(&(p_eff - frames[i].t));
        for k in 0..3 {
            jac[(k, i)] = lin[k];
            jac[(k + 3, i)] = z[k];
        }
    }
    Ok(jac)
}

/// Tuning knobs for [`ik_solve`]. Translation and rotation residuals are
/// checked separately because mixing their units is dimensionally unsound.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IkOptions {
    /// Translation tolerance, meters.
    pub tol_translation: f64,
    /// Rotation tolerance, radians (norm of the error rotation vector).
    pub tol_rotation: f64,
    pub max_iters: usize,
    /// Tikhonov damping added to the normal equations.
    pub damping: f64,
    /// Smallest singular value below which the Jacobian is declared singular.
    pub singular_threshold: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        IkOptions {
            tol_translation: 1e-6,
            tol_rotation: 1e-6,
            max_iters: 50,
            damping: 1e-10,
            singular_threshold: 1e-8,
        }
    }
}

/// Wraps into `(-pi, pi]`; values already in range pass through bit-exact.
fn wrap_angle(a: f64) -> f64 {
    let pi = std::f64::consts::PI;
    if a > -pi && a <= pi {
        return a;
    }
    let two_pi = 2.0 * pi;
    let mut w = (a + pi).rem_euclid(two_pi) - pi;
    if w <= -pi {
        w += two_pi;
    }
    w
}

/// Pose residual `x_target ⊖ Γ(q)` as a 6-vector `[translation; rotation]`.
fn pose_residual(target: &Pose, current: &Pose) -> Vector6<f64> {
    let e_t = target.t - current.t;
    let e_r = geometry::pose_error(target, current).r;
    Vector6::new(e_t.x, e_t.y, e_t.z, e_r.x, e_r.y, e_r.z)
}

/// Inverse kinematics by iterative linearization, warm-started at `q_prev`.
///
/// Returns joint positions whose forward kinematics match `x_target` within
/// the configured tolerances while staying as close to `q_prev` as the
/// relinearized constraint allows.
pub fn ik_solve(
    model: &ArmModel,
    q_prev: &DVector<f64>,
    x_target: &Pose,
    opts: &IkOptions,
) -> Result<DVector<f64>, IkError> {
    let n = model.n_joints();
    assert_eq!(q_prev.len(), n, "q_prev dimension mismatch");
    let mut q = q_prev.clone();
    let mut trans_res = f64::INFINITY;
    let mut rot_res = f64::INFINITY;
    for _ in 0..opts.max_iters {
        let fk = forward_kinematics(model, &q).expect("dimension checked");
        let residual = pose_residual(x_target, &fk);
        trans_res = residual.fixed_rows::<3>(0).norm();
        rot_res = residual.fixed_rows::<3>(3).norm();
        if trans_res <= opts.tol_translation && rot_res <= opts.tol_rotation {
            let mut out = q;
            for i in 0..n {
                out[i] = wrap_angle(out[i]);
                let [lo, hi] = model.joint_limits()[i];
                if out[i] < lo - 1e-12 || out[i] > hi + 1e-12 {
                    return Err(IkError::LimitViolation { joint: i });
                }
            }
            return Ok(out);
        }
        let jac = jacobian(model, &q).expect("dimension checked");
        let svd = jac.clone().svd(false, false);
        let sigma_min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        if sigma_min < opts.singular_threshold {
            return Err(IkError::SingularJacobian { sigma_min });
        }
        // min ‖q⁺ − q_prev‖² s.t. J q⁺ = J q + residual, via damped normal
        // equations on J Jᵀ.
        let rhs = residual + &jac * (&q - q_prev);
        let jjt = &jac * jac.transpose()
            + DMatrix::identity(6, 6) * opts.damping;
        let lam = jjt
            .cholesky()
            .map(|c| c.solve(&DVector::from_column_slice(rhs.as_slice())))
            .ok_or(IkError::SingularJacobian { sigma_min })?;
        q = q_prev + jac.transpose() * lam;
    }
    Err(IkError::NoConvergence {
        iterations: opts.max_iters,
        translation_residual: trans_res,
        rotation_residual: rot_res,
    })
}

/// Converts a timed Cartesian trajectory to joint space by solving IK
/// sequentially, warm-starting each step at the previous solution, then fills
/// joint velocities from the Cartesian velocities.
pub fn cartesian_to_joint_trajectory(
    model: &ArmModel,
    steps: &[(f64, Pose, Vector6<f64>)],
    q_start: &DVector<f64>,
    opts: &IkOptions,
) -> Result<JointTrajectory, TrajectoryIkError> {
    let mut out = JointTrajectory::default();
    let mut q_prev = q_start.clone();
    for (i, (time, pose, vel)) in steps.iter().enumerate() {
        let q = ik_solve(model, &q_prev, pose, opts)
            .map_err(|source| TrajectoryIkError { step: i, source })?;
        let qd = joint_velocities(model, &q, vel)
            .map_err(|source| TrajectoryIkError { step: i, source })?;
        out.steps.push((*time, JointState { q: q.clone(), qd }));
        q_prev = q;
    }
    Ok(out)
}

/// Joint velocities solving `J(q)·q̇ = ẋ` exactly.
pub fn joint_velocities(
    model: &ArmModel,
    q: &DVector<f64>,
    x_vel: &Vector6<f64>,
) -> Result<DVector<f64>, IkError> {
    let jac = jacobian(model, q).expect("dimension checked by caller");
    let svd = jac.clone().svd(false, false);
    let sigma_min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if sigma_min < 1e-8 {
        return Err(IkError::SingularJacobian { sigma_min });
    }
    let rhs = DVector::from_column_slice(x_vel.as_slice());
    jac.lu()
        .solve(&rhs)
        .ok_or(IkError::SingularJacobian { sigma_min })
}
