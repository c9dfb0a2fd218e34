//! Simulated multi-pin insertion on a serial arm.
//!
//! The crate composes four cooperating pieces around a deterministic
//! simulated environment:
//!
//! * [`occt`] — the optimal configurable Cartesian tracker: a constrained
//!   regulation problem in Cartesian space plus inverse kinematics, tracking
//!   static references emitted by the insertion agent.
//! * [`sia`] — the safe insertion agent: a finite state machine sequencing
//!   alignment, insertion, collision-triggered lifting, retries, and
//!   termination.
//! * [`pim`] — the probabilistic inference module: a sampled belief over
//!   hidden pin defects and the true goal pose, conditioned on failed
//!   attempts, optimized to propose the next insertion pose.
//! * [`slm`] — the safe learning module: a three-phase evolutionary tuning
//!   protocol over the tracker, agent, and inference parameters.
//!
//! Supporting modules: [`geometry`] (poses and error transforms),
//! [`kinematics`] (forward/inverse kinematics), [`qp`] (the per-axis
//! box-constrained quadratic program), [`cmaes`] (the evolution strategy),
//! [`simenv`] (board, defects, contact), [`episode`] (the tick loop gluing
//! everything together), [`config`] and [`cli`] (file formats and commands).
//!
//! The narrative guide lives in `book/`; its code snippets compile and run
//! as doc-tests against this crate, so the book cannot drift from the
//! library.
//!
//! ```
//! use nalgebra::Vector6;
//! use pinsert::geometry::Pose;
//! use pinsert::occt::{solve_lqr, OcctParams};
//!
//! // Plan a bounded, rest-to-rest 10 mm descent in error coordinates.
//! let params = OcctParams { t_steps: 25, ..OcctParams::default() };
//! let error = Pose::from_translation(0.0, 0.0, 0.010);
//! let traj = solve_lqr(&params, &error, &Vector6::zeros()).unwrap();
//! assert!(traj.steps.last().unwrap().pose.t.amax() <= 1e-6);
//! ```

pub mod cli;
pub mod cmaes;
pub mod config;
pub mod episode;
pub mod geometry;
pub mod kinematics;
pub mod occt;
pub mod pim;
pub mod qp;
pub mod rng;
pub mod sia;
pub mod simenv;
pub mod slm;

// The guide's code blocks run as doc-tests so the book stays in sync with
// the crate.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/poses.md")]
    mod poses {}
    #[doc = include_str!("../../../book/src/kinematics.md")]
    mod kinematics {}
    #[doc = include_str!("../../../book/src/tracking.md")]
    mod tracking {}
    #[doc = include_str!("../../../book/src/insertion-agent.md")]
    mod insertion_agent {}
    #[doc = include_str!("../../../book/src/goal-inference.md")]
    mod goal_inference {}
    #[doc = include_str!("../../../book/src/evolution-strategy.md")]
    mod evolution_strategy {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/learning.md")]
    mod learning {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
