//! Probabilistic inference over insertion goals.
//!
//! The insertion goal is uncertain for two reasons: perception noise shifts
//! the perceived goal away from the true one, and hidden per-pin bends change
//! which poses fit at all. The module keeps a sampled belief over
//! (defect set, true goal) hypotheses, removes hypotheses contradicted by
//! each failed attempt, and proposes the pose with the highest estimated
//! success probability by running the evolution strategy over XY offsets.
//!
//! Conditioning is hard rejection: the simulated collision signal is binary,
//! so a hypothesis under which a failed pose would have fit has likelihood
//! zero given the failure.

use crate::cmaes::{self, EsConfig};
use crate::geometry::Pose;
use crate::rng::{standard_normal, stream};
use nalgebra::{DVector, Vector2, Vector3};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Geometry of a multi-pin component and its mating hole grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Pin-to-pin spacing, meters.
    pub pin_pitch: f64,
    /// Pin radius, meters.
    pub pin_radius: f64,
    /// Hole radius, meters.
    pub hole_radius: f64,
}

impl ComponentGeometry {
    /// The experiment component: a 2x4 grid of 0.6 mm pins mating 1.0 mm
    /// holes at a 2.54 mm pitch.
    pub fn default_socket() -> Self {
        ComponentGeometry {
            rows: 2,
            cols: 4,
            pin_pitch: 2.54e-3,
            pin_radius: 0.3e-3,
            hole_radius: 0.5e-3,
        }
    }

    pub fn n_pins(&self) -> usize {
        self.rows * self.cols
    }

    /// Per-pin XY clearance: hole radius minus pin radius.
    pub fn clearance(&self) -> f64 {
        self.hole_radius - self.pin_radius
    }

    /// Nominal pin offsets from the component center, row-major.
    pub fn pin_offsets(&self) -> Vec<Vector2<f64>> {
        let mut out = Vec::with_capacity(self.n_pins());
        let cx = (self.cols as f64 - 1.0) / 2.0;
        let cy = (self.rows as f64 - 1.0) / 2.0;
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(Vector2::new(
                    (c as f64 - cx) * self.pin_pitch,
                    (r as f64 - cy) * self.pin_pitch,
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.rows == 0 || self.cols == 0 {
            return Err("component needs at least one pin".into());
        }
        if !(self.pin_radius < self.hole_radius) {
            return Err("pin radius must be smaller than hole radius".into());
        }
        if !(self.pin_pitch > 0.0) {
            return Err("pin pitch must be positive".into());
        }
        Ok(())
    }
}

/// A realized component: geometry plus the hidden per-pin bends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub geometry: ComponentGeometry,
    /// Per-pin XY displacement of the pin tip, meters. Hidden from the
    /// policy; only the simulator and the belief hypotheses see defects.
    pub defect_offsets: Vec<Vector2<f64>>,
}

impl ComponentSpec {
    pub fn pristine(geometry: ComponentGeometry) -> Self {
        let n = geometry.n_pins();
        ComponentSpec { geometry, defect_offsets: vec![Vector2::zeros(); n] }
    }
}

/// Feasibility of `delta` = (insertion pose − true goal) in XY for a given
/// defect set: every (possibly bent) pin must stay inside its hole clearance.
pub fn feasible_offset(
    geometry: &ComponentGeometry,
    defects: &[Vector2<f64>],
    delta_xy: &Vector2<f64>,
) -> bool {
    let clearance = geometry.clearance();
    defects.iter().all(|d| (d + delta_xy).norm() <= clearance)
}

/// The feasibility indicator shared by the simulator and the belief: true iff
/// every pin fits its hole when the component sits at `insertion_pose` and
/// the holes actually are where `true_goal` says.
pub fn feasible(spec: &ComponentSpec, insertion_pose: &Pose, true_goal: &Pose) -> bool {
    let delta = Vector2::new(
        insertion_pose.t.x - true_goal.t.x,
        insertion_pose.t.y - true_goal.t.y,
    );
    feasible_offset(&spec.geometry, &spec.defect_offsets, &delta)
}

/// Defect distribution: each pin bends independently with probability
/// `p_defect`; the bend is an isotropic Gaussian truncated at `max_offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectModel {
    pub p_defect: f64,
    /// Bend standard deviation per axis, meters.
    pub sigma: f64,
    /// Truncation radius, meters.
    pub max_offset: f64,
}

impl Default for DefectModel {
    fn default() -> Self {
        DefectModel { p_defect: 0.15, sigma: 0.15e-3, max_offset: 0.45e-3 }
    }
}

impl DefectModel {
    pub fn sample(&self, n_pins: usize, rng: &mut ChaCha8Rng) -> Vec<Vector2<f64>> {
        use rand::Rng;
        (0..n_pins)
            .map(|_| {
                if rng.random::<f64>() < self.p_defect {
                    loop {
                        let d = Vector2::new(
                            standard_normal(rng) * self.sigma,
                            standard_normal(rng) * self.sigma,
                        );
                        if d.norm() <= self.max_offset {
                            break d;
                        }
                    }
                } else {
                    Vector2::zeros()
                }
            })
            .collect()
    }
}

/// Counts and noise scales driving the inference; the tuner's second group.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PimParams {
    /// Belief sample count.
    pub n_smp: usize,
    /// Optimizer generations per inference.
    pub n_gen: usize,
    /// Optimizer population per generation.
    pub n_pop: usize,
    /// Optimizer elite count.
    pub n_elite: usize,
    /// Assumed perception standard deviation in X, meters.
    pub sigma_x: f64,
    /// Assumed perception standard deviation in Y, meters.
    pub sigma_y: f64,
}

impl Default for PimParams {
    fn default() -> Self {
        PimParams {
            n_smp: 500,
            n_gen: 10,
            n_pop: 50,
            n_elite: 15,
            sigma_x: 0.3e-3,
            sigma_y: 0.3e-3,
        }
    }
}

impl PimParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_smp < 1 {
            return Err("n_smp must be at least 1".into());
        }
        if self.n_gen < 1 || self.n_pop < 1 || self.n_elite < 1 {
            return Err("optimizer counts must be at least 1".into());
        }
        if self.n_elite > self.n_pop {
            return Err("n_elite must not exceed n_pop".into());
        }
        if self.sigma_x < 0.0 || self.sigma_y < 0.0 {
            return Err("perception deviations must be non-negative".into());
        }
        Ok(())
    }
}

/// One belief hypothesis: a defect draw, a true-goal draw, and its weight.
#[derive(Clone, Debug, Serialize)]
pub struct GoalSample {
    pub goal_xy: Vector2<f64>,
    pub defects: Vec<Vector2<f64>>,
    pub weight: f64,
}

/// Sampled belief over (defects, true goal), conditioned on failed attempts.
#[derive(Clone, Debug)]
pub struct Belief {
    pub samples: Vec<GoalSample>,
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// The perceived goal the belief is centered on.
    pub perceived: Pose,
    geometry: ComponentGeometry,
    defect_model: DefectModel,
    /// Attempted poses observed to collide, in attempt order.
    history: Vec<Pose>,
    reseed_rng: ChaCha8Rng,
}

/// Re-seeding gives up after `RESAMPLE_CAP_FACTOR * n_smp` rejection draws.
pub const RESAMPLE_CAP_FACTOR: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum PimError {
    #[error("belief collapsed: no hypothesis is consistent with {failures} failed attempts")]
    BeliefCollapse { failures: usize },
}

fn draw_sample(
    perceived: &Pose,
    sigma_x: f64,
    sigma_y: f64,
    geometry: &ComponentGeometry,
    defect_model: &DefectModel,
    rng: &mut ChaCha8Rng,
) -> (Vector2<f64>, Vec<Vector2<f64>>) {
    let goal_xy = Vector2::new(
        perceived.t.x + standard_normal(rng) * sigma_x,
        perceived.t.y + standard_normal(rng) * sigma_y,
    );
    let defects = defect_model.sample(geometry.n_pins(), rng);
    (goal_xy, defects)
}

/// Whether a hypothesis says `pose` would fit.
fn hypothesis_feasible(geometry: &ComponentGeometry, s_goal: &Vector2<f64>, s_defects: &[Vector2<f64>], pose: &Pose) -> bool {
    let delta = Vector2::new(pose.t.x - s_goal.x, pose.t.y - s_goal.y);
    feasible_offset(geometry, s_defects, &delta)
}

/// Builds the prior belief around the perceived goal.
pub fn init_belief(
    params: &PimParams,
    x_perceived: &Pose,
    geometry: &ComponentGeometry,
    defect_model: &DefectModel,
    seed: u64,
) -> Belief {
    let mut rng = stream(seed, &[0xb411ef]);
    let w = 1.0 / params.n_smp as f64;
    let samples = (0..params.n_smp)
        .map(|_| {
            let (goal_xy, defects) = draw_sample(
                x_perceived,
                params.sigma_x,
                params.sigma_y,
                geometry,
                defect_model,
                &mut rng,
            );
            GoalSample { goal_xy, defects, weight: w }
        })
        .collect();
    Belief {
        samples,
        sigma_x: params.sigma_x,
        sigma_y: params.sigma_y,
        perceived: *x_perceived,
        geometry: geometry.clone(),
        defect_model: *defect_model,
        history: Vec::new(),
        reseed_rng: rng,
    }
}

impl Belief {
    pub fn history(&self) -> &[Pose] {
        &self.history
    }

    /// Zeroes the weight of every hypothesis that would have fit at the
    /// failed pose and renormalizes. When every hypothesis is contradicted,
    /// the belief is re-seeded from the prior by rejection against the full
    /// failure history; if that cannot produce a consistent sample set within
    /// the cap, the component is likely un-insertable.
    pub fn condition_on_failure(&mut self, failed_pose: &Pose) -> Result<(), PimError> {
        self.history.push(*failed_pose);
        let mut total = 0.0;
        let mut zeroed = 0usize;
        for s in &mut self.samples {
            if s.weight > 0.0
                && hypothesis_feasible(&self.geometry, &s.goal_xy, &s.defects, failed_pose)
            {
                s.weight = 0.0;
                zeroed += 1;
            }
            total += s.weight;
        }
        if zeroed == 0 {
            // Vacuous conditioning: nothing predicted success there.
            return Ok(());
        }
        if total > 0.0 {
            for s in &mut self.samples {
                s.weight /= total;
            }
            return Ok(());
        }
        // Re-seed from the prior, rejecting against the whole history.
        let n = self.samples.len();
        let cap = RESAMPLE_CAP_FACTOR * n;
        let mut fresh = Vec::with_capacity(n);
        for _ in 0..cap {
            let (goal_xy, defects) = draw_sample(
                &self.perceived,
                self.sigma_x,
                self.sigma_y,
                &self.geometry,
                &self.defect_model,
                &mut self.reseed_rng,
            );
            let consistent = self
                .history
                .iter()
                .all(|p| !hypothesis_feasible(&self.geometry, &goal_xy, &defects, p));
            if consistent {
                fresh.push(GoalSample { goal_xy, defects, weight: 1.0 / n as f64 });
                if fresh.len() == n {
                    break;
                }
            }
        }
        if fresh.len() < n {
            return Err(PimError::BeliefCollapse { failures: self.history.len() });
        }
        self.samples = fresh;
        Ok(())
    }

    /// Estimated success probability of a candidate pose: the weighted
    /// fraction of hypotheses under which it fits. Compensated summation
    /// keeps the result independent of sample order; the clamp absorbs the
    /// last-ulp excess of a fully feasible belief.
    pub fn success_probability(&self, pose: &Pose) -> f64 {
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for s in &self.samples {
            if s.weight > 0.0
                && hypothesis_feasible(&self.geometry, &s.goal_xy, &s.defects, pose)
            {
                let y = s.weight - comp;
                let t = sum + y;
                comp = (t - sum) - y;
                sum = t;
            }
        }
        sum.clamp(0.0, 1.0)
    }

    fn pose_from_xy(&self, xy: &Vector2<f64>) -> Pose {
        Pose {
            t: Vector3::new(xy.x, xy.y, self.perceived.t.z),
            r: Vector3::zeros(),
        }
    }

    /// CSV snapshot: goal XY, per-pin defect offsets, weight.
    pub fn to_csv(&self) -> String {
        let n_pins = self.geometry.n_pins();
        let mut out = String::from("goal_x,goal_y");
        for i in 1..=n_pins {
            out.push_str(&format!(",defect{i}_x,defect{i}_y"));
        }
        out.push_str(",weight\n");
        for s in &self.samples {
            out.push_str(&format!("{},{}", s.goal_xy.x, s.goal_xy.y));
            for d in &s.defects {
                out.push_str(&format!(",{},{}", d.x, d.y));
            }
            out.push_str(&format!(",{}\n", s.weight));
        }
        out
    }
}

/// Half-width of the XY search window around the perceived goal.
pub const SEARCH_WINDOW: f64 = 1.0e-3;

/// Proposes the insertion pose with the highest estimated success
/// probability, together with that probability.
///
/// The evolution strategy searches XY offsets within ±[`SEARCH_WINDOW`] of
/// the perceived goal; Z and orientation stay fixed by the task frame. The
/// perceived goal itself is always evaluated, and ties are broken toward it
/// (then by candidate order), so an indifferent belief returns the perception
/// prior exactly.
pub fn infer_goal(belief: &Belief, params: &PimParams, seed: u64) -> (Pose, f64) {
    let center = Vector2::new(belief.perceived.t.x, belief.perceived.t.y);
    let bounds = vec![
        [center.x - SEARCH_WINDOW, center.x + SEARCH_WINDOW],
        [center.y - SEARCH_WINDOW, center.y + SEARCH_WINDOW],
    ];
    let cfg = EsConfig {
        pop_size: params.n_pop,
        elite_size: params.n_elite.min(params.n_pop),
        max_gens: params.n_gen,
        ..EsConfig::new(
            DVector::from_vec(vec![center.x, center.y]),
            0.3 * SEARCH_WINDOW,
            bounds,
            seed,
        )
    };
    let objective = |x: &DVector<f64>| {
        let pose = belief.pose_from_xy(&Vector2::new(x[0], x[1]));
        -belief.success_probability(&pose)
    };
    let (_, run) = cmaes::minimize(&cfg, objective);

    // Select the best evaluated candidate under the tie-break order:
    // fitness, then distance to the perceived goal, then evaluation order.
    let prior_prob = belief.success_probability(&belief.perceived);
    let mut best_xy = center;
    let mut best_prob = prior_prob;
    let mut best_dist = 0.0;
    for g in &run.generations {
        for (cand, fit) in g.candidates.iter().zip(g.fitnesses.iter()) {
            let prob = -fit;
            let xy = Vector2::new(cand[0], cand[1]);
            let dist = (xy - center).norm();
            if prob > best_prob + 1e-15 || (prob >= best_prob - 1e-15 && dist < best_dist - 1e-15)
            {
                best_prob = prob;
                best_xy = xy;
                best_dist = dist;
            }
        }
    }
    let pose = belief.pose_from_xy(&best_xy);
    // Report the exactly recomputed probability at the returned pose.
    (pose, belief.success_probability(&pose))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_noise_params() -> PimParams {
        PimParams { sigma_x: 0.0, sigma_y: 0.0, ..PimParams::default() }
    }

    fn no_defects() -> DefectModel {
        DefectModel { p_defect: 0.0, ..DefectModel::default() }
    }

    fn goal_at(x: f64, y: f64) -> Pose {
        Pose::from_translation(x, y, 0.1)
    }

    #[test]
    fn feasible_centered_and_offset() {
        let spec = ComponentSpec::pristine(ComponentGeometry::default_socket());
        let goal = goal_at(0.0, 0.0);
        assert!(feasible(&spec, &goal, &goal));
        // 0.3 mm offset against 0.2 mm clearance: out.
        let off = goal_at(0.3e-3, 0.0);
        assert!(!feasible(&spec, &off, &goal));
        // 0.19 mm offset: still in.
        let near = goal_at(0.19e-3, 0.0);
        assert!(feasible(&spec, &near, &goal));
    }

    #[test]
    fn feasible_matches_per_pin_brute_force() {
        let geometry = ComponentGeometry::default_socket();
        let mut spec = ComponentSpec::pristine(geometry.clone());
        spec.defect_offsets[3] = Vector2::new(-0.15e-3, 0.05e-3);
        let goal = goal_at(0.0, 0.0);
        let mut rng = stream(31, &[1]);
        use rand::Rng;
        for _ in 0..500 {
            let pose = goal_at(
                rng.random_range(-0.4e-3..0.4e-3),
                rng.random_range(-0.4e-3..0.4e-3),
            );
            let delta = Vector2::new(pose.t.x, pose.t.y);
            // Exhaustive per-pin check straight from the definition.
            let brute = spec.defect_offsets.iter().enumerate().all(|(_, d)| {
                let pin_center = d + delta;
                pin_center.norm() <= geometry.clearance()
            });
            assert_eq!(feasible(&spec, &pose, &goal), brute);
        }
    }

    #[test]
    fn init_belief_degenerate_and_seeded() {
        let geometry = ComponentGeometry::default_socket();
        let perceived = goal_at(0.01, -0.02);
        let b = init_belief(&zero_noise_params(), &perceived, &geometry, &no_defects(), 7);
        for s in &b.samples {
            assert_eq!(s.goal_xy, Vector2::new(0.01, -0.02));
            assert!(s.defects.iter().all(|d| d.norm() == 0.0));
        }
        // Sample standard deviation tracks sigma for a large draw.
        let params = PimParams { n_smp: 1000, ..PimParams::default() };
        let b = init_belief(&params, &perceived, &geometry, &no_defects(), 7);
        let mean_x: f64 = b.samples.iter().map(|s| s.goal_xy.x).sum::<f64>() / 1000.0;
        let var_x: f64 = b
            .samples
            .iter()
            .map(|s| (s.goal_xy.x - mean_x).powi(2))
            .sum::<f64>()
            / 1000.0;
        let sd = var_x.sqrt();
        assert!(
            (sd - 0.3e-3).abs() < 0.15 * 0.3e-3,
            "sample sd {sd} vs 0.3 mm"
        );
        // Determinism.
        let b2 = init_belief(&params, &perceived, &geometry, &no_defects(), 7);
        for (a, c) in b.samples.iter().zip(b2.samples.iter()) {
            assert_eq!(a.goal_xy, c.goal_xy);
            assert_eq!(a.defects, c.defects);
        }
    }

    #[test]
    fn conditioning_is_vacuous_far_away() {
        let geometry = ComponentGeometry::default_socket();
        let perceived = goal_at(0.0, 0.0);
        let mut b = init_belief(&PimParams::default(), &perceived, &geometry, &DefectModel::default(), 9);
        let before: Vec<f64> = b.samples.iter().map(|s| s.weight).collect();
        // 5 mm away: no hypothesis predicted success there.
        b.condition_on_failure(&goal_at(5e-3, 0.0)).unwrap();
        let after: Vec<f64> = b.samples.iter().map(|s| s.weight).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn conditioning_contradiction_collapses() {
        let geometry = ComponentGeometry::default_socket();
        let perceived = goal_at(0.0, 0.0);
        let mut b = init_belief(&zero_noise_params(), &perceived, &geometry, &no_defects(), 9);
        // The only hypothesis says the perceived goal fits; observing a
        // collision right there contradicts everything.
        let err = b.condition_on_failure(&perceived).unwrap_err();
        assert_eq!(err, PimError::BeliefCollapse { failures: 1 });
    }

    #[test]
    fn conditioning_two_hypotheses_enumeration() {
        // Construct a belief holding exactly two hypotheses and fail at a
        // pose feasible only under hypothesis A: all mass must move to B.
        let geometry = ComponentGeometry::default_socket();
        let perceived = goal_at(0.0, 0.0);
        let mut b = init_belief(
            &PimParams { n_smp: 2, sigma_x: 0.0, sigma_y: 0.0, ..PimParams::default() },
            &perceived,
            &geometry,
            &no_defects(),
            5,
        );
        b.samples[0].goal_xy = Vector2::new(0.0, 0.0); // A
        b.samples[1].goal_xy = Vector2::new(0.35e-3, 0.0); // B
        let fail_pose = goal_at(0.0, 0.0); // feasible under A only
        b.condition_on_failure(&fail_pose).unwrap();
        assert_eq!(b.samples[0].weight, 0.0);
        assert!((b.samples[1].weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conditioned_weights_never_revive() {
        let geometry = ComponentGeometry::default_socket();
        let perceived = goal_at(0.0, 0.0);
        let mut b = init_belief(&PimParams::default(), &perceived, &geometry, &DefectModel::default(), 13);
        b.condition_on_failure(&goal_at(0.05e-3, 0.0)).unwrap();
        for s in &b.samples {
            if hypothesis_feasible(&b.geometry, &s.goal_xy, &s.defects, &goal_at(0.05e-3, 0.0)) {
                assert_eq!(s.weight, 0.0);
            }
        }
        let total: f64 = b.samples.iter().map(|s| s.weight).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infer_goal_prior_with_perfect_component_returns_perception() {
        let geometry = ComponentGeometry::default_socket();
        let perceived = goal_at(0.004, -0.007);
        let b = init_belief(&zero_noise_params(), &perceived, &geometry, &no_defects(), 3);
        let (pose, prob) = infer_goal(&b, &zero_noise_params(), 17);
        assert_eq!(pose.t, perceived.t);
        assert_eq!(prob, 1.0);
    }

    #[test]
    fn infer_goal_single_shifted_hypothesis() {
        let geometry = ComponentGeometry::default_socket();
        let perceived = goal_at(0.0, 0.0);
        let mut b = init_belief(&zero_noise_params(), &perceived, &geometry, &no_defects(), 3);
        let true_goal = Vector2::new(0.4e-3, -0.3e-3);
        for s in &mut b.samples {
            s.goal_xy = true_goal;
        }
        let (pose, prob) = infer_goal(&b, &PimParams::default(), 21);
        let dist = (Vector2::new(pose.t.x, pose.t.y) - true_goal).norm();
        assert!(dist <= geometry.clearance(), "inferred {dist} from hypothesis");
        assert_eq!(prob, 1.0);
    }

    #[test]
    fn infer_goal_deterministic() {
        let geometry = ComponentGeometry::default_socket();
        let perceived = goal_at(0.0, 0.0);
        let mut b = init_belief(&PimParams::default(), &perceived, &geometry, &DefectModel::default(), 23);
        b.condition_on_failure(&goal_at(0.25e-3, 0.1e-3)).unwrap();
        let (p1, f1) = infer_goal(&b, &PimParams::default(), 29);
        let (p2, f2) = infer_goal(&b, &PimParams::default(), 29);
        assert_eq!(p1.t, p2.t);
        assert_eq!(f1, f2);
    }

    #[test]
    fn infer_goal_probability_is_recomputable() {
        let geometry = ComponentGeometry::default_socket();
        let perceived = goal_at(0.0, 0.0);
        let mut b = init_belief(&PimParams::default(), &perceived, &geometry, &DefectModel::default(), 37);
        b.condition_on_failure(&goal_at(-0.2e-3, 0.0)).unwrap();
        let (pose, prob) = infer_goal(&b, &PimParams::default(), 41);
        assert!((0.0..=1.0).contains(&prob));
        assert_eq!(prob, b.success_probability(&pose));
    }

    #[test]
    fn belief_csv_has_sample_rows() {
        let geometry = ComponentGeometry::default_socket();
        let b = init_belief(
            &PimParams { n_smp: 4, ..PimParams::default() },
            &goal_at(0.0, 0.0),
            &geometry,
            &DefectModel::default(),
            1,
        );
        let csv = b.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("goal_x,goal_y,defect1_x"));
    }
}
