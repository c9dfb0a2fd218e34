//! Optimal configurable Cartesian tracker.
//!
//! Tracking a static reference works in error coordinates: the tracker
//! solves a T-step constrained regulation problem that drives the Cartesian
//! error (pose and velocity) to zero, maps the error trajectory back onto the
//! reference through the world-frame error transform, and converts the result
//! to joint space. The regulation problem carries an acceleration box, a
//! velocity box, pinned-to-zero orientation, and a hard rest-to-rest terminal
//! constraint; because the state and input weights are scalar, the three
//! translation axes decouple and are solved independently by [`crate::qp`].
//!
//! The tracker replans only when the reference changes or the measured pose
//! deviates from the active plan by more than a threshold; in the kinematic
//! simulation the second branch only fires under fault injection or when a
//! halted plan leaves the reference unreached.

use crate::geometry::{apply_error_on_reference, pose_error, Pose};
use crate::kinematics::{
    cartesian_to_joint_trajectory, ArmModel, IkOptions, JointTrajectory, TrajectoryIkError,
};
use crate::qp::{self, AxisProblem, QpError, QpSettings};
use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tracker parameters. Defaults are the tuner's nominal values; note that the
/// default one-second horizon only reaches a few millimetres under the
/// default acceleration bound, so operational configs use a longer horizon.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OcctParams {
    /// Run-time state weight.
    pub v_q: f64,
    /// Terminal state weight.
    pub v_s: f64,
    /// Horizon steps.
    pub t_steps: usize,
    /// Step interval, seconds.
    pub dt: f64,
    /// Acceleration bound, m/s².
    pub b_u: f64,
    /// Velocity bound, m/s.
    pub b_v: f64,
    /// Tracking error above which the active plan is replaced, meters.
    pub replan_error_threshold: f64,
}

impl Default for OcctParams {
    fn default() -> Self {
        OcctParams {
            v_q: 10.0,
            v_s: 100.0,
            t_steps: 10,
            dt: 0.1,
            b_u: 0.02,
            b_v: 0.02,
            replan_error_threshold: 0.002,
        }
    }
}

impl OcctParams {
    pub fn horizon_seconds(&self) -> f64 {
        self.t_steps as f64 * self.dt
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.v_q >= 0.0 && self.v_s >= 0.0) {
            return Err("state weights must be non-negative".into());
        }
        if self.t_steps < 2 {
            return Err("horizon must have at least two steps".into());
        }
        if !(self.dt > 0.0) {
            return Err("dt must be positive".into());
        }
        if !(self.b_u > 0.0 && self.b_v > 0.0) {
            return Err("acceleration and velocity bounds must be positive".into());
        }
        Ok(())
    }
}

/// One step of a Cartesian trajectory.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CartesianStep {
    pub time: f64,
    pub pose: Pose,
    /// Linear and angular velocity, m/s and rad/s.
    pub vel: Vector6<f64>,
    /// Linear and angular acceleration.
    pub acc: Vector6<f64>,
}

/// Timed Cartesian states with velocities and accelerations.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CartesianTrajectory {
    pub steps: Vec<CartesianStep>,
}

impl CartesianTrajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.steps.first(), self.steps.last()) {
            (Some(a), Some(b)) => b.time - a.time,
            _ => 0.0,
        }
    }

    /// Pose at `time` under zero-order hold (last step at or before `time`).
    pub fn pose_at(&self, time: f64) -> Option<&CartesianStep> {
        let mut out = None;
        for s in &self.steps {
            if s.time <= time + 1e-12 {
                out = Some(s);
            } else {
                break;
            }
        }
        out.or(self.steps.first())
    }

    /// CSV rows `time, tx..tz, rx..rz, v1..v6, a1..a6`, one row per step.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("time,tx,ty,tz,rx,ry,rz,vx,vy,vz,wx,wy,wz,ax,ay,az,alx,aly,alz\n");
        for s in &self.steps {
            out.push_str(&format!("{}", s.time));
            for v in s.pose.to_array() {
                out.push_str(&format!(",{v}"));
            }
            for v in s.vel.iter() {
                out.push_str(&format!(",{v}"));
            }
            for v in s.acc.iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Why a regulation instance was declared infeasible.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfeasibleReason {
    /// Reachability pre-screen `‖x_err‖∞ > b_v·T·dt + ½·b_v²/b_u` fired.
    OutOfReach,
    /// The splitting iteration capped with a large primal residual.
    Residual,
    /// The orientation error is nonzero; the pinned orientation constraint
    /// cannot hold.
    NonzeroOrientation,
    /// Initial velocity already violates the velocity box.
    InitialVelocity,
}

#[derive(Debug, Error)]
pub enum OcctError {
    #[error("regulation problem infeasible ({reason:?})")]
    Infeasible { reason: InfeasibleReason },
    #[error("inverse kinematics failed: {0}")]
    Ik(#[from] TrajectoryIkError),
}

impl From<QpError> for OcctError {
    fn from(_: QpError) -> Self {
        OcctError::Infeasible { reason: InfeasibleReason::Residual }
    }
}

/// Solves the T-step regulation problem in error coordinates.
///
/// `x_err0` is the pose error of the current pose against the reference (its
/// orientation components must be zero) and `v0` the current Cartesian
/// velocity. The returned trajectory drives the error to rest at zero while
/// honoring the boxes; its poses are error poses with zero orientation.
pub fn solve_lqr(
    params: &OcctParams,
    x_err0: &Pose,
    v0: &Vector6<f64>,
) -> Result<CartesianTrajectory, OcctError> {
    if !x_err0.orientation_is_zero(1e-9) || v0.fixed_rows::<3>(3).amax() > 1e-9 {
        return Err(OcctError::Infeasible { reason: InfeasibleReason::NonzeroOrientation });
    }
    for axis in 0..3 {
        if v0[axis].abs() > params.b_v + 1e-12 {
            return Err(OcctError::Infeasible { reason: InfeasibleReason::InitialVelocity });
        }
    }
    // Analytic reachability pre-screen (cruise plus braking margin).
    if params.b_u.is_finite() && params.b_v.is_finite() {
        let reach = params.b_v * params.horizon_seconds()
            + 0.5 * params.b_v * params.b_v / params.b_u;
        if x_err0.t.amax() > reach {
            return Err(OcctError::Infeasible { reason: InfeasibleReason::OutOfReach });
        }
    }

    let settings = QpSettings::default();
    let mut axes = Vec::with_capacity(3);
    for axis in 0..3 {
        let prob = AxisProblem {
            t_steps: params.t_steps,
            dt: params.dt,
            v_q: params.v_q,
            v_s: params.v_s,
            b_u: params.b_u,
            b_v: params.b_v,
            p0: x_err0.t[axis],
            v0: v0[axis],
        };
        axes.push(qp::solve_axis(&prob, &settings)?);
    }

    let t = params.t_steps;
    let mut steps = Vec::with_capacity(t + 1);
    for k in 0..=t {
        let pose = Pose {
            t: Vector3::new(axes[0].pos[k], axes[1].pos[k], axes[2].pos[k]),
            r: Vector3::zeros(),
        };
        let vel = Vector6::new(axes[0].vel[k], axes[1].vel[k], axes[2].vel[k], 0.0, 0.0, 0.0);
        let acc = if k < t {
            Vector6::new(axes[0].u[k], axes[1].u[k], axes[2].u[k], 0.0, 0.0, 0.0)
        } else {
            Vector6::zeros()
        };
        steps.push(CartesianStep { time: k as f64 * params.dt, pose, vel, acc });
    }
    Ok(CartesianTrajectory { steps })
}

/// Plans a joint trajectory from `x_current` to the static reference `x_ref`.
///
/// Both poses must have zero orientation (the end-effector points down along
/// the task frame). The error trajectory from [`solve_lqr`] is applied onto
/// the reference as a world-frame transform, then converted to joint space
/// starting from `q_current`; the first joint state equals `q_current`.
pub fn track_static_reference(
    params: &OcctParams,
    model: &ArmModel,
    x_current: &Pose,
    x_ref: &Pose,
    q_current: &nalgebra::DVector<f64>,
    v0: &Vector6<f64>,
    ik: &IkOptions,
) -> Result<(CartesianTrajectory, JointTrajectory), OcctError> {
    if !x_current.orientation_is_zero(1e-9) || !x_ref.orientation_is_zero(1e-9) {
        return Err(OcctError::Infeasible { reason: InfeasibleReason::NonzeroOrientation });
    }
    let x_err0 = pose_error(x_current, x_ref);
    let err_traj = solve_lqr(params, &x_err0, v0)?;
    let world: CartesianTrajectory = CartesianTrajectory {
        steps: err_traj
            .steps
            .iter()
            .map(|s| CartesianStep {
                time: s.time,
                pose: apply_error_on_reference(&s.pose, x_ref),
                vel: s.vel,
                acc: s.acc,
            })
            .collect(),
    };
    let ik_input: Vec<(f64, Pose, Vector6<f64>)> =
        world.steps.iter().map(|s| (s.time, s.pose, s.vel)).collect();
    let joints = cartesian_to_joint_trajectory(model, &ik_input, q_current, ik)?;
    Ok((world, joints))
}

/// Live tracker state: the active plan and its reference.
#[derive(Clone, Debug, Default)]
pub struct Tracker {
    active: Option<ActivePlan>,
}

#[derive(Clone, Debug)]
pub struct ActivePlan {
    pub reference: Pose,
    pub cartesian: CartesianTrajectory,
    pub joints: JointTrajectory,
}

/// Measurements handed to [`Tracker::refresh`] once per control tick.
pub struct RefreshInput<'a> {
    pub x_ref: Pose,
    pub q_measured: &'a nalgebra::DVector<f64>,
    pub x_measured: Pose,
    pub v_measured: Vector6<f64>,
    /// Time elapsed since the active plan started.
    pub plan_elapsed: f64,
}

impl Tracker {
    pub fn new() -> Self {
        Tracker { active: None }
    }

    pub fn active(&self) -> Option<&ActivePlan> {
        self.active.as_ref()
    }

    /// Per-tick refresh: replans only when the reference changed by more than
    /// 1e-9 or the measured pose deviates from the active plan by more than
    /// the replan threshold. Returns the new plan when one was made.
    pub fn refresh(
        &mut self,
        params: &OcctParams,
        model: &ArmModel,
        ik: &IkOptions,
        input: &RefreshInput,
    ) -> Result<Option<&ActivePlan>, OcctError> {
        let needs_replan = match &self.active {
            None => true,
            Some(plan) => {
                let ref_moved = (plan.reference.t - input.x_ref.t).amax() > 1e-9
                    || (plan.reference.r - input.x_ref.r).amax() > 1e-9;
                let expected = plan
                    .cartesian
                    .pose_at(input.plan_elapsed)
                    .map(|s| s.pose)
                    .unwrap_or(plan.reference);
                let tracking_error = (expected.t - input.x_measured.t).norm();
                ref_moved || tracking_error > params.replan_error_threshold
            }
        };
        if !needs_replan {
            return Ok(None);
        }
        let (cartesian, joints) = track_static_reference(
            params,
            model,
            &input.x_measured,
            &input.x_ref,
            input.q_measured,
            &input.v_measured,
            ik,
        )?;
        self.active = Some(ActivePlan { reference: input.x_ref, cartesian, joints });
        Ok(self.active.as_ref())
    }

    /// Drops the active plan (used when execution halts on contact).
    pub fn clear(&mut self) {
        self.active = None;
    }
}
