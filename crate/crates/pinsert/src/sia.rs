//! Safe insertion agent: the finite state machine sequencing alignment,
//! insertion, collision-triggered lifting, retries, and termination.
//!
//! The agent is driven once per control tick with the current pose, force,
//! and an optional goal update, and emits Cartesian references for the
//! tracker. Legal transitions:
//!
//! ```text
//! Init → Alignment          goal received (trigger)
//! Alignment → Insertion     alignment pose reached
//! Insertion → Safe          contact force above threshold
//! Safe → Insertion          updated goal received
//! Insertion → Released      goal reached without collision
//! Insertion | Safe → Failed termination (attempt cap or hopeless belief)
//! ```
//!
//! Anything else the observations imply is rejected as an invalid
//! transition. The agent never commands a downward reference while in the
//! safe state, and its episode statistics tie out against the transition
//! log: collisions equal Insertion→Safe edges, attempts equal Safe→Insertion
//! edges plus one.

use crate::geometry::Pose;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiaState {
    Init,
    Alignment,
    Insertion,
    Safe,
    Released,
    Failed,
}

/// Agent knobs. `dz` doubles as the alignment offset above the goal and the
/// lift height after a collision.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SiaParams {
    /// Alignment offset, meters.
    pub dz: f64,
    /// Contact force that counts as a collision, newtons.
    pub force_threshold: f64,
    /// Attempt cap before the episode fails.
    pub max_failures: u32,
    /// Estimated success probability below which the component is declared
    /// un-insertable.
    pub success_prob_threshold: f64,
    /// Final XY tolerance for a successful insertion, meters.
    pub xy_tolerance: f64,
    /// Per-axis translation tolerance for "reference reached", meters.
    pub goal_tolerance: f64,
}

impl Default for SiaParams {
    fn default() -> Self {
        SiaParams {
            dz: 0.015,
            force_threshold: 2.0,
            max_failures: 20,
            success_prob_threshold: 0.05,
            xy_tolerance: 1e-4,
            goal_tolerance: 1e-4,
        }
    }
}

impl SiaParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dz > 0.0) {
            return Err("alignment offset must be positive".into());
        }
        if !(self.force_threshold > 0.0) {
            return Err("force threshold must be positive".into());
        }
        if self.max_failures == 0 {
            return Err("max_failures must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.success_prob_threshold) {
            return Err("success probability threshold must be in [0, 1]".into());
        }
        Ok(())
    }
}

/// Episode outcome for the reward accounting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Fail,
    /// Planning failed (the tracker could not produce a trajectory).
    Infeasible,
}

/// Aggregated statistics of one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    /// Total simulated time spent in the insertion state, seconds.
    pub t_insert: f64,
    /// Collision count (Insertion→Safe transitions).
    pub collisions: u32,
    /// Maximum contact force observed, newtons.
    pub max_force: f64,
    /// Insertion attempts (Safe→Insertion transitions plus one).
    pub attempts: u32,
    pub outcome: Outcome,
    /// XY distance to the commanded goal at release, meters.
    pub final_xy_error: Option<f64>,
}

/// What the agent senses at one tick.
#[derive(Clone, Debug)]
pub struct Observations {
    pub pose: Pose,
    pub force: Vector3<f64>,
    /// New goal pose (the trigger in `Init`, the retry goal in `Safe`).
    pub goal_update: Option<Pose>,
    /// Whether the commanded trajectory has finished executing.
    pub trajectory_done: bool,
}

/// Why a transition fired; recorded in the event log.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransitionReason {
    Trigger,
    AlignmentReached,
    Collision,
    GoalUpdated,
    GoalReached,
    Terminated,
}

/// One event-log line.
#[derive(Clone, Debug, Serialize)]
pub struct SiaEvent {
    pub tick: u64,
    pub state: SiaState,
    /// Measured pose this tick, `[tx, ty, tz, rx, ry, rz]`.
    pub pose: [f64; 6],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<[f64; 6]>,
    pub force: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<TransitionReason>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SiaError {
    #[error("invalid transition: {trigger} while in {state:?}")]
    InvalidTransition { state: SiaState, trigger: &'static str },
}

/// Output of one tick.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub state: SiaState,
    /// Reference emitted this tick, if any.
    pub reference: Option<Pose>,
    pub transitioned: Option<TransitionReason>,
}

/// The agent. One instance drives one episode.
pub struct SiaAgent {
    params: SiaParams,
    tick_dt: f64,
    state: SiaState,
    tick: u64,
    goal: Option<Pose>,
    align_pose: Option<Pose>,
    t_insert: f64,
    collisions: u32,
    attempts: u32,
    max_force: f64,
    final_xy_error: Option<f64>,
    outcome: Option<Outcome>,
    log: Vec<SiaEvent>,
}

impl SiaAgent {
    pub fn new(params: SiaParams, tick_dt: f64) -> Self {
        SiaAgent {
            params,
            tick_dt,
            state: SiaState::Init,
            tick: 0,
            goal: None,
            align_pose: None,
            t_insert: 0.0,
            collisions: 0,
            attempts: 0,
            max_force: 0.0,
            final_xy_error: None,
            outcome: None,
            log: Vec::new(),
        }
    }

    pub fn state(&self) -> SiaState {
        self.state
    }

    pub fn attempts(&self) -> u32 {
        self.attempts
    }

    pub fn params(&self) -> &SiaParams {
        &self.params
    }

    /// Structured event log (one entry per tick).
    pub fn log(&self) -> &[SiaEvent] {
        &self.log
    }

    pub fn log_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.log {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    fn reached(&self, pose: &Pose, target: &Pose) -> bool {
        (pose.t - target.t).amax() <= self.params.goal_tolerance
    }

    fn lift_pose(&self, from: &Pose) -> Pose {
        let mut p = *from;
        p.t.z += self.params.dz;
        p.r = Vector3::zeros();
        p
    }

    /// Advances the machine one tick.
    pub fn step(&mut self, obs: &Observations) -> Result<StepOutput, SiaError> {
        self.tick += 1;
        if self.state == SiaState::Insertion {
            self.t_insert += self.tick_dt;
        }
        let force_mag = obs.force.norm();
        self.max_force = self.max_force.max(force_mag);
        let collision = force_mag > self.params.force_threshold;

        let mut reference = None;
        let mut reason = None;

        match self.state {
            SiaState::Init => {
                if collision {
                    return Err(SiaError::InvalidTransition {
                        state: self.state,
                        trigger: "contact force",
                    });
                }
                if let Some(goal) = obs.goal_update {
                    let mut align = goal;
                    align.t.z += self.params.dz;
                    self.goal = Some(goal);
                    self.align_pose = Some(align);
                    self.state = SiaState::Alignment;
                    reference = Some(align);
                    reason = Some(TransitionReason::Trigger);
                }
            }
            SiaState::Alignment => {
                if collision {
                    return Err(SiaError::InvalidTransition {
                        state: self.state,
                        trigger: "contact force",
                    });
                }
                if obs.goal_update.is_some() {
                    return Err(SiaError::InvalidTransition {
                        state: self.state,
                        trigger: "goal update",
                    });
                }
                let align = self.align_pose.expect("alignment requires a goal");
                // Generous tolerance: position only, no XY check.
                if obs.trajectory_done && self.reached(&obs.pose, &align) {
                    self.state = SiaState::Insertion;
                    self.attempts = 1;
                    reference = self.goal;
                    reason = Some(TransitionReason::AlignmentReached);
                }
            }
            SiaState::Insertion => {
                let goal = self.goal.expect("insertion requires a goal");
                if collision {
                    self.state = SiaState::Safe;
                    self.collisions += 1;
                    reference = Some(self.lift_pose(&obs.pose));
                    reason = Some(TransitionReason::Collision);
                } else if obs.goal_update.is_some() {
                    return Err(SiaError::InvalidTransition {
                        state: self.state,
                        trigger: "goal update",
                    });
                } else if obs.trajectory_done
                    && (obs.pose.t.z - goal.t.z) <= self.params.goal_tolerance
                {
                    let xy_err = ((obs.pose.t.x - goal.t.x).powi(2)
                        + (obs.pose.t.y - goal.t.y).powi(2))
                    .sqrt();
                    if xy_err <= self.params.xy_tolerance {
                        self.state = SiaState::Released;
                        self.final_xy_error = Some(xy_err);
                        self.outcome = Some(Outcome::Success);
                        reason = Some(TransitionReason::GoalReached);
                    }
                }
            }
            SiaState::Safe => {
                if let Some(goal) = obs.goal_update {
                    let mut align = goal;
                    align.t.z += self.params.dz;
                    self.goal = Some(goal);
                    self.align_pose = Some(align);
                    self.state = SiaState::Insertion;
                    self.attempts += 1;
                    reference = Some(goal);
                    reason = Some(TransitionReason::GoalUpdated);
                }
                // Otherwise keep lifting; contact may persist for a tick.
            }
            SiaState::Released | SiaState::Failed => {}
        }

        self.log.push(SiaEvent {
            tick: self.tick,
            state: self.state,
            pose: obs.pose.to_array(),
            reference: reference.map(|p| p.to_array()),
            force: force_mag,
            reason,
        });
        Ok(StepOutput { state: self.state, reference, transitioned: reason })
    }

    /// Termination test, called after each failed attempt: the episode fails
    /// once the attempt cap is reached or no candidate pose looks viable.
    pub fn should_terminate(&self, belief_max_prob: f64) -> Option<Outcome> {
        if self.attempts >= self.params.max_failures {
            return Some(Outcome::Fail);
        }
        if belief_max_prob < self.params.success_prob_threshold {
            return Some(Outcome::Fail);
        }
        None
    }

    /// Drives the machine into `Failed` (legal from Insertion and Safe).
    pub fn fail(&mut self) -> Result<(), SiaError> {
        match self.state {
            SiaState::Insertion | SiaState::Safe => {
                self.state = SiaState::Failed;
                self.outcome = Some(Outcome::Fail);
                self.log.push(SiaEvent {
                    tick: self.tick,
                    state: self.state,
                    pose: [0.0; 6],
                    reference: None,
                    force: 0.0,
                    reason: Some(TransitionReason::Terminated),
                });
                Ok(())
            }
            _ => Err(SiaError::InvalidTransition { state: self.state, trigger: "terminate" }),
        }
    }

    /// Finalizes statistics. `outcome_override` reports tracker-level
    /// failures (infeasible planning) that end the episode without a state
    /// transition.
    pub fn stats(&self, outcome_override: Option<Outcome>) -> EpisodeStats {
        EpisodeStats {
            t_insert: self.t_insert,
            collisions: self.collisions,
            max_force: self.max_force,
            attempts: self.attempts.max(1),
            outcome: outcome_override.or(self.outcome).unwrap_or(Outcome::Fail),
            final_xy_error: self.final_xy_error,
        }
    }
}

/// The legal transition table; used by the log checker and tests.
pub fn is_legal_transition(from: SiaState, to: SiaState) -> bool {
    use SiaState::*;
    matches!(
        (from, to),
        (Init, Alignment)
            | (Alignment, Insertion)
            | (Insertion, Safe)
            | (Safe, Insertion)
            | (Insertion, Released)
            | (Insertion, Failed)
            | (Safe, Failed)
    )
}

/// Replays an event log against the transition table and the accounting
/// identities. Returns the collision and attempt counts on success.
pub fn check_log(log: &[SiaEvent]) -> Result<(u32, u32), String> {
    let mut prev = SiaState::Init;
    let mut collisions = 0u32;
    let mut safe_to_insertion = 0u32;
    let mut saw_insertion = false;
    for (i, e) in log.iter().enumerate() {
        if e.state != prev && !is_legal_transition(prev, e.state) {
            return Err(format!("illegal transition {:?} -> {:?} at log index {i}", prev, e.state));
        }
        if prev == SiaState::Insertion && e.state == SiaState::Safe {
            collisions += 1;
        }
        if prev == SiaState::Safe && e.state == SiaState::Insertion {
            safe_to_insertion += 1;
        }
        if e.state == SiaState::Insertion {
            saw_insertion = true;
        }
        // Safety: never command downward while lifted.
        if e.state == SiaState::Safe {
            if let Some(r) = e.reference {
                if r[2] < e.pose[2] {
                    return Err(format!(
                        "downward reference while in Safe at log index {i}: {r:?}"
                    ));
                }
            }
        }
        prev = e.state;
    }
    let attempts = if saw_insertion { safe_to_insertion + 1 } else { 0 };
    Ok((collisions, attempts))
}
