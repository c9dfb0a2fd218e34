//! The per-episode tick loop gluing agent, tracker, inference, and
//! environment together, plus the trajectory-free attempt loop used for fast
//! benchmarking and inference-parameter tuning.
//!
//! One tick (default 0.1 s of simulated time):
//!
//! 1. the environment is observed,
//! 2. the agent steps, possibly emitting a reference,
//! 3. the reference crosses a fixed delay queue (modeling the link between
//!    agent and tracker),
//! 4. the tracker refreshes against the delayed reference and may install a
//!    new plan in the environment,
//! 5. simulated time advances.
//!
//! After a collision the agent lifts, the inference policy conditions on the
//! failed goal and proposes the next one, and the termination test decides
//! whether to retry.

use crate::geometry::Pose;
use crate::kinematics::IkOptions;
use crate::occt::{CartesianStep, CartesianTrajectory, OcctError, OcctParams, RefreshInput, Tracker};
use crate::pim::{
    feasible, infer_goal, init_belief, Belief, ComponentGeometry, DefectModel, PimError, PimParams,
};
use crate::rng::{derive_seed, standard_normal, stream};
use crate::sia::{Observations, Outcome, SiaAgent, SiaError, SiaEvent, SiaParams, SiaState};
use crate::simenv::{reward_pim, EnvConfig, EnvError, SimEnv, TaskInstance};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

/// Synthetic inference-time coefficient: seconds per
/// `n_smp · n_pop · n_gen` unit. Calibrated so the default counts cost about
/// half a second, matching the reported scale of the hardware runs.
pub const SYNTHETIC_TCOMP_COEFF: f64 = 2.0e-6;

/// How the next insertion pose is proposed after a failure.
pub enum RetryPolicy {
    /// Belief-driven inference.
    Pim(PimPolicy),
    /// Fresh Gaussian draws around the perceived goal, ignoring history.
    Random(RandomPolicy),
    /// Always the perceived goal; no retries (used by phase-1 tuning where
    /// tasks are collision-free).
    Fixed,
}

pub struct PimPolicy {
    pub belief: Belief,
    pub params: PimParams,
    seed: u64,
    calls: u64,
    /// Wall-clock inference timing instead of the synthetic model; breaks
    /// artifact determinism, off by default.
    pub wallclock_tcomp: bool,
}

impl PimPolicy {
    pub fn new(
        params: PimParams,
        geometry: &ComponentGeometry,
        defects: &DefectModel,
        perceived: &Pose,
        seed: u64,
        wallclock_tcomp: bool,
    ) -> Self {
        let belief = init_belief(&params, perceived, geometry, defects, derive_seed(seed, &[1]));
        PimPolicy { belief, params, seed, calls: 0, wallclock_tcomp }
    }

    fn synthetic_tcomp(&self) -> f64 {
        SYNTHETIC_TCOMP_COEFF
            * self.params.n_smp as f64
            * self.params.n_pop as f64
            * self.params.n_gen as f64
    }

    /// Runs one inference; returns the proposed pose, its estimated success
    /// probability, and the (synthetic or measured) computation time.
    pub fn infer(&mut self) -> (Pose, f64, f64) {
        self.calls += 1;
        let started = std::time::Instant::now();
        let (pose, prob) = infer_goal(
            &self.belief,
            &self.params,
            derive_seed(self.seed, &[2, self.calls]),
        );
        let t_comp = if self.wallclock_tcomp {
            started.elapsed().as_secs_f64()
        } else {
            self.synthetic_tcomp()
        };
        (pose, prob, t_comp)
    }
}

pub struct RandomPolicy {
    pub sigma_x: f64,
    pub sigma_y: f64,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(sigma_x: f64, sigma_y: f64, seed: u64) -> Self {
        RandomPolicy { sigma_x, sigma_y, rng: stream(seed, &[0xd1ce]) }
    }

    fn draw(&mut self, perceived: &Pose) -> Pose {
        let mut p = *perceived;
        p.t.x += standard_normal(&mut self.rng) * self.sigma_x;
        p.t.y += standard_normal(&mut self.rng) * self.sigma_y;
        p
    }
}

/// Record of one inference call inside an episode.
#[derive(Clone, Debug, Serialize)]
pub struct InferRecord {
    pub attempt: u32,
    pub goal: [f64; 6],
    pub max_prob: f64,
    pub t_comp: f64,
}

/// Everything an episode leaves behind.
pub struct EpisodeResult {
    pub stats: crate::sia::EpisodeStats,
    pub events: Vec<SiaEvent>,
    pub joint_log: crate::kinematics::JointTrajectory,
    pub cartesian_log: CartesianTrajectory,
    pub infer_calls: Vec<InferRecord>,
    /// Total inference time charged to the episode.
    pub t_comp_total: f64,
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] SiaError),
}

/// Safety valve on episode length (simulated ticks), generous enough for the
/// attempt cap at the slowest tracker settings.
const MAX_TICKS: u64 = 100_000;

/// Runs one full insertion episode.
pub fn run_episode(
    env: &mut SimEnv,
    occt: &OcctParams,
    sia_params: &SiaParams,
    policy: &mut RetryPolicy,
    seed: u64,
) -> Result<EpisodeResult, EpisodeError> {
    let tick_dt = env.config().tick_dt;
    let delay_ticks = env.config().delay_ticks;
    let ik = IkOptions::default();
    let mut agent = SiaAgent::new(*sia_params, tick_dt);
    let mut tracker = Tracker::new();
    let mut infer_calls: Vec<InferRecord> = Vec::new();
    let mut t_comp_total = 0.0;

    // The first goal proposal triggers the agent out of Init.
    let perceived = env.task().perceived_goal;
    let initial_goal = match &mut *policy {
        RetryPolicy::Pim(p) => {
            let (pose, prob, t_comp) = p.infer();
            t_comp_total += t_comp;
            infer_calls.push(InferRecord {
                attempt: 0,
                goal: pose.to_array(),
                max_prob: prob,
                t_comp,
            });
            pose
        }
        RetryPolicy::Random(_) | RetryPolicy::Fixed => perceived,
    };

    let mut pending_update = Some(initial_goal);
    // Reference delay queue: emitted references reach the tracker
    // `delay_ticks` later.
    let mut queue: Vec<(u64, Pose)> = Vec::new();
    let mut active_ref: Option<Pose> = None;
    let mut outcome_override: Option<Outcome> = None;
    let mut joint_log = crate::kinematics::JointTrajectory::default();
    let mut cartesian_log = CartesianTrajectory::default();

    let mut tick: u64 = 0;
    loop {
        tick += 1;
        if tick > MAX_TICKS {
            outcome_override = Some(Outcome::Fail);
            break;
        }
        let obs = env.observe();
        // References and goal updates only flow when the environment is not
        // pressing on the board: a halted plan is resolved by the collision
        // path (lift), never by replanning into the contact.
        let goal_update = match agent.state() {
            SiaState::Init | SiaState::Safe if env.trajectory_done() && !env.pressed() => {
                pending_update.take()
            }
            _ => None,
        };
        let out = agent.step(&Observations {
            pose: obs.pose,
            force: obs.force,
            goal_update,
            trajectory_done: obs.trajectory_done,
        })?;

        match out.state {
            SiaState::Released | SiaState::Failed => break,
            _ => {}
        }

        if let Some(reference) = out.reference {
            queue.push((tick + delay_ticks as u64, reference));
        }
        if out.transitioned == Some(crate::sia::TransitionReason::Collision) {
            // The stale descent reference must not replan into the board
            // while the lift is in flight through the delay queue.
            active_ref = None;
        }
        if let Some(pos) = queue.iter().position(|(due, _)| *due <= tick) {
            active_ref = Some(queue.remove(pos).1);
            if env.pressed() {
                // The halted plan is gone; the lift replans from rest.
                tracker.clear();
            }
        }

        if env.pressed() && agent.state() != SiaState::Safe {
            // Pressing on the board without a lift under way: let the force
            // ramp drive the collision transition before planning anything.
            env.advance(tick_dt);
            continue;
        }

        if let Some(reference) = active_ref {
            let obs_now = env.observe();
            let q = env.joint_state().clone();
            let refresh = tracker.refresh(occt, &env.arm, &ik, &RefreshInput {
                x_ref: reference,
                q_measured: &q,
                x_measured: obs_now.pose,
                v_measured: obs_now.vel,
                plan_elapsed: env.plan_elapsed(),
            });
            match refresh {
                Ok(Some(plan)) => {
                    for (t, s) in &plan.joints.steps {
                        joint_log.steps.push((env.time() + t, s.clone()));
                    }
                    for s in &plan.cartesian.steps {
                        cartesian_log.steps.push(CartesianStep {
                            time: env.time() + s.time,
                            ..*s
                        });
                    }
                    env.begin(plan.joints.clone());
                }
                Ok(None) => {}
                Err(OcctError::Infeasible { .. }) => {
                    outcome_override = Some(Outcome::Infeasible);
                    break;
                }
                Err(OcctError::Ik(_)) => {
                    outcome_override = Some(Outcome::Infeasible);
                    break;
                }
            }
        }

        env.advance(tick_dt);

        // Collision handling: once lifted clear of the board, propose the
        // next goal (or give up).
        if agent.state() == SiaState::Safe
            && env.trajectory_done()
            && !env.pressed()
            && pending_update.is_none()
        {
            let failed_goal = infer_calls
                .last()
                .map(|r| Pose::from_array(&r.goal))
                .unwrap_or(perceived);
            match &mut *policy {
                RetryPolicy::Pim(p) => {
                    match p.belief.condition_on_failure(&failed_goal) {
                        Ok(()) => {
                            let (pose, prob, t_comp) = p.infer();
                            t_comp_total += t_comp;
                            infer_calls.push(InferRecord {
                                attempt: agent.attempts(),
                                goal: pose.to_array(),
                                max_prob: prob,
                                t_comp,
                            });
                            if let Some(outcome) = agent.should_terminate(prob) {
                                let _ = outcome;
                                agent.fail()?;
                                break;
                            }
                            pending_update = Some(pose);
                        }
                        Err(PimError::BeliefCollapse { .. }) => {
                            agent.fail()?;
                            break;
                        }
                    }
                }
                RetryPolicy::Random(r) => {
                    if agent.should_terminate(1.0).is_some() {
                        agent.fail()?;
                        break;
                    }
                    pending_update = Some(r.draw(&perceived));
                }
                RetryPolicy::Fixed => {
                    agent.fail()?;
                    break;
                }
            }
        }
    }

    let _ = seed;
    Ok(EpisodeResult {
        stats: agent.stats(outcome_override),
        events: agent.log().to_vec(),
        joint_log,
        cartesian_log,
        infer_calls,
        t_comp_total,
    })
}

/// Outcome of the trajectory-free attempt loop.
#[derive(Clone, Debug, Serialize)]
pub struct AbstractResult {
    pub success: bool,
    pub attempts: u32,
    pub t_comp_total: f64,
    /// Mean inference time per call; what the reward charges.
    pub t_comp: f64,
    /// Episode cost under the inference reward.
    pub cost: f64,
}

/// Attempt loop against the bare feasibility predicate: propose, test,
/// condition, repeat. Attempt counts match the full simulation because the
/// contact decision depends only on the commanded XY against the hidden
/// geometry.
pub fn run_abstract_insertion(
    task: &TaskInstance,
    params: &PimParams,
    policy_kind: AbstractPolicy,
    max_trials: u32,
    seed: u64,
) -> AbstractResult {
    let geometry = task.spec.geometry.clone();
    let defect_model = DefectModel::default();
    let mut policy = match policy_kind {
        AbstractPolicy::Pim { defects } => RetryPolicy::Pim(PimPolicy::new(
            *params,
            &geometry,
            &defects,
            &task.perceived_goal,
            seed,
            false,
        )),
        AbstractPolicy::Random { sigma_x, sigma_y } => {
            RetryPolicy::Random(RandomPolicy::new(sigma_x, sigma_y, seed))
        }
    };
    let _ = defect_model;
    let mut t_comp_total = 0.0;
    let mut calls = 0u32;
    let mut attempts = 0u32;
    let mut success = false;
    let mut proposal = match &mut policy {
        RetryPolicy::Pim(p) => {
            let (pose, _, t_comp) = p.infer();
            t_comp_total += t_comp;
            calls += 1;
            pose
        }
        _ => task.perceived_goal,
    };
    while attempts < max_trials {
        attempts += 1;
        if feasible(&task.spec, &proposal, &task.true_goal) {
            success = true;
            break;
        }
        match &mut policy {
            RetryPolicy::Pim(p) => {
                if p.belief.condition_on_failure(&proposal).is_err() {
                    break;
                }
                let (pose, prob, t_comp) = p.infer();
                t_comp_total += t_comp;
                calls += 1;
                if prob < 1e-12 {
                    break;
                }
                proposal = pose;
            }
            RetryPolicy::Random(r) => {
                proposal = r.draw(&task.perceived_goal);
            }
            RetryPolicy::Fixed => break,
        }
    }
    let t_comp = t_comp_total / calls.max(1) as f64;
    let cost = reward_pim(!success, attempts as f64, t_comp);
    AbstractResult { success, attempts, t_comp_total, t_comp, cost }
}

/// Policy selector for [`run_abstract_insertion`].
pub enum AbstractPolicy {
    Pim { defects: DefectModel },
    Random { sigma_x: f64, sigma_y: f64 },
}

/// Convenience: build the environment and run one episode end to end.
pub fn run_task_episode(
    arm: crate::kinematics::ArmModel,
    env_cfg: &EnvConfig,
    occt: &OcctParams,
    sia_params: &SiaParams,
    pim_params: &PimParams,
    task: TaskInstance,
    policy: PolicyKind,
    seed: u64,
    wallclock_tcomp: bool,
) -> Result<EpisodeResult, EpisodeError> {
    let geometry = task.spec.geometry.clone();
    let perceived = task.perceived_goal;
    let defects = env_cfg.defects;
    let mut env = SimEnv::new(arm, env_cfg.clone(), task)?;
    let mut policy = match policy {
        PolicyKind::Pim => RetryPolicy::Pim(PimPolicy::new(
            *pim_params,
            &geometry,
            &defects,
            &perceived,
            seed,
            wallclock_tcomp,
        )),
        PolicyKind::Random => RetryPolicy::Random(RandomPolicy::new(
            pim_params.sigma_x,
            pim_params.sigma_y,
            seed,
        )),
        PolicyKind::Fixed => RetryPolicy::Fixed,
    };
    run_episode(&mut env, occt, sia_params, &mut policy, seed)
}

/// Which retry policy an episode uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PolicyKind {
    Pim,
    Random,
    Fixed,
}
