//! Safe learning module: evolutionary tuning of the tracker, agent, and
//! inference parameters against episode rewards, in three phases.
//!
//! 1. `occt_sia` — the five low-level parameters (state weights, horizon,
//!    planning rate, alignment offset) are tuned on full simulated episodes
//!    with collision-free tasks.
//! 2. `pim` — the four inference counts are tuned on the fast attempt loop
//!    over a fixed battery of defective tasks; the perception deviations are
//!    held at their configured values in this phase.
//! 3. `finetune` — all eleven parameters jointly, with the exploration box
//!    shrunk to 20 % of each original range around the learned values, on
//!    episodes that include deliberately inaccurate goals so collisions are
//!    exercised.
//!
//! Every candidate is decoded from a normalized unit box, integer counts are
//! rounded at evaluation time, and every seed derives from the master seed,
//! so a full run replays identically.

use crate::cmaes::{self, EsConfig, EsRun};
use crate::episode::{
    run_abstract_insertion, run_task_episode, AbstractPolicy, PolicyKind,
};
use crate::kinematics::ArmModel;
use crate::occt::OcctParams;
use crate::pim::{DefectModel, PimParams};
use crate::rng::derive_seed;
use crate::sia::{Outcome, SiaParams};
use crate::simenv::{reward_occt, sample_insertable_task, sample_task, EnvConfig};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    OcctSia,
    Pim,
}

/// One tunable parameter: name, nominal value, learnable range, group.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ParamEntry {
    pub name: &'static str,
    pub default: f64,
    pub lo: f64,
    pub hi: f64,
    pub group: ParamGroup,
}

/// The learnable parameters with their nominal values and ranges.
pub const PARAM_TABLE: [ParamEntry; 11] = [
    ParamEntry { name: "v_q", default: 10.0, lo: 0.0, hi: 20.0, group: ParamGroup::OcctSia },
    ParamEntry { name: "v_s", default: 100.0, lo: 90.0, hi: 110.0, group: ParamGroup::OcctSia },
    ParamEntry { name: "t_occt", default: 1.0, lo: 0.75, hi: 3.0, group: ParamGroup::OcctSia },
    ParamEntry { name: "rate", default: 10.0, lo: 5.0, hi: 20.0, group: ParamGroup::OcctSia },
    ParamEntry { name: "dz", default: 0.015, lo: 0.005, hi: 0.025, group: ParamGroup::OcctSia },
    ParamEntry { name: "n_smp", default: 500.0, lo: 5.0, hi: 1000.0, group: ParamGroup::Pim },
    ParamEntry { name: "n_gen", default: 10.0, lo: 2.0, hi: 20.0, group: ParamGroup::Pim },
    ParamEntry { name: "n_pop", default: 50.0, lo: 3.0, hi: 100.0, group: ParamGroup::Pim },
    ParamEntry { name: "n_elite", default: 15.0, lo: 3.0, hi: 30.0, group: ParamGroup::Pim },
    ParamEntry { name: "sigma_x", default: 0.0003, lo: 0.00001, hi: 0.0005, group: ParamGroup::Pim },
    ParamEntry { name: "sigma_y", default: 0.0003, lo: 0.00001, hi: 0.0005, group: ParamGroup::Pim },
];

const OCCT_SIA_IDX: std::ops::Range<usize> = 0..5;
const PIM_COUNT_IDX: std::ops::Range<usize> = 5..9;

/// A concrete assignment of the eleven tunables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub values: Vec<f64>,
}

impl Default for ParamSet {
    fn default() -> Self {
        ParamSet { values: PARAM_TABLE.iter().map(|e| e.default).collect() }
    }
}

impl ParamSet {
    pub fn index_of(name: &str) -> Option<usize> {
        PARAM_TABLE.iter().position(|e| e.name == name)
    }

    pub fn value(&self, name: &str) -> f64 {
        self.values[Self::index_of(name).expect("known parameter")]
    }

    pub fn set(&mut self, name: &str, v: f64) {
        let i = Self::index_of(name).expect("known parameter");
        self.values[i] = v;
    }

    /// All values within their learnable ranges.
    pub fn validate(&self) -> Result<(), String> {
        if self.values.len() != PARAM_TABLE.len() {
            return Err("wrong parameter count".into());
        }
        for (v, e) in self.values.iter().zip(PARAM_TABLE.iter()) {
            if !(e.lo - 1e-12 <= *v && *v <= e.hi + 1e-12) {
                return Err(format!("{} = {v} outside [{}, {}]", e.name, e.lo, e.hi));
            }
        }
        Ok(())
    }

    /// Horizon steps and interval derived from the planned execution time and
    /// planning rate, with the product clamped back into the learnable range.
    pub fn horizon(&self) -> (usize, f64) {
        let t_occt = self.value("t_occt");
        let rate = self.value("rate");
        let dt = 1.0 / rate;
        let (lo, hi) = (PARAM_TABLE[2].lo, PARAM_TABLE[2].hi);
        let t = (t_occt * rate).round().max(2.0) as usize;
        let t_min = (lo * rate - 1e-9).ceil() as usize;
        let t_max = (hi * rate + 1e-9).floor() as usize;
        (t.clamp(t_min.max(2), t_max.max(2)), dt)
    }

    pub fn occt_params(&self, base: &OcctParams) -> OcctParams {
        let (t_steps, dt) = self.horizon();
        OcctParams {
            v_q: self.value("v_q"),
            v_s: self.value("v_s"),
            t_steps,
            dt,
            ..*base
        }
    }

    pub fn sia_params(&self, base: &SiaParams) -> SiaParams {
        SiaParams { dz: self.value("dz"), ..*base }
    }

    /// Integer counts rounded at evaluation time; the elite count is clamped
    /// to the population after rounding.
    pub fn pim_params(&self, _base: &PimParams) -> PimParams {
        let n_pop = (self.value("n_pop").round() as usize).max(1);
        PimParams {
            n_smp: (self.value("n_smp").round() as usize).max(1),
            n_gen: (self.value("n_gen").round() as usize).max(1),
            n_pop,
            n_elite: (self.value("n_elite").round() as usize).clamp(1, n_pop),
            sigma_x: self.value("sigma_x"),
            sigma_y: self.value("sigma_y"),
        }
    }
}

/// Budgets for one tuning phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseBudget {
    pub generations: usize,
    pub population: usize,
    /// Episodes (phase 1/3) or tasks (phase 2) per candidate.
    pub evals_per_candidate: usize,
    /// Initial step size in the normalized search box.
    pub sigma0: f64,
}

/// Tuning configuration; the `slm` config section.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlmConfig {
    pub phase1: PhaseBudget,
    pub phase2: PhaseBudget,
    pub phase3: PhaseBudget,
    /// Initial step size as a fraction of the (normalized) box width.
    pub sigma0_frac: f64,
    /// Total box width of the fine-tune phase relative to the full range.
    pub finetune_shrink: f64,
    /// Attempt cap for the fast inference loop.
    pub max_trials: u32,
}

impl Default for SlmConfig {
    fn default() -> Self {
        SlmConfig {
            phase1: PhaseBudget { generations: 25, population: 10, evals_per_candidate: 1, sigma0: 0.3 },
            phase2: PhaseBudget {
                generations: 25,
                population: 10,
                evals_per_candidate: 100,
                sigma0: 0.5,
            },
            phase3: PhaseBudget { generations: 10, population: 10, evals_per_candidate: 20, sigma0: 0.3 },
            sigma0_frac: 0.3,
            finetune_shrink: 0.2,
            max_trials: 20,
        }
    }
}

impl SlmConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, b) in [("phase1", self.phase1), ("phase2", self.phase2), ("phase3", self.phase3)] {
            if b.population < 2 || b.evals_per_candidate == 0 {
                return Err(format!("{name}: population must be >= 2 and evals >= 1"));
            }
        }
        if !(self.sigma0_frac > 0.0 && self.sigma0_frac <= 1.0) {
            return Err("sigma0_frac must be in (0, 1]".into());
        }
        if !(self.finetune_shrink > 0.0 && self.finetune_shrink <= 1.0) {
            return Err("finetune_shrink must be in (0, 1]".into());
        }
        Ok(())
    }
}

/// Per-candidate evaluation record: decoded parameters plus episode metrics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub gen: usize,
    pub idx: usize,
    /// Decoded parameter values (full table order for phase 3, group order
    /// otherwise).
    pub params: Vec<f64>,
    pub param_names: Vec<String>,
    /// Mean episode cost (lower is better); the optimizer's fitness.
    pub cost: f64,
    /// Metrics averaged over the candidate's feasible episodes.
    pub force: f64,
    pub time: f64,
    pub reward: f64,
    pub trials: f64,
    pub t_comp: f64,
    /// Fraction of the candidate's episodes that were feasible.
    pub feasible: f64,
}

/// History of one tuning phase.
#[derive(Clone, Debug, Serialize)]
pub struct PhaseReport {
    pub phase: String,
    pub candidates: Vec<CandidateRecord>,
    pub es: EsRun,
    pub learned: ParamSet,
    pub env_hash: u64,
}

/// Full three-phase report.
#[derive(Clone, Debug, Serialize)]
pub struct LearnReport {
    pub master_seed: u64,
    pub env_hash: u64,
    pub phases: Vec<PhaseReport>,
    pub final_params: ParamSet,
}

#[derive(Debug, Error)]
pub enum SlmError {
    #[error("environment configuration changed: report hash {expected:#x} vs current {got:#x}")]
    EnvMismatch { expected: u64, got: u64 },
}

/// FNV-1a hash of the environment configuration; phases refuse to resume
/// against a different environment.
pub fn env_hash(env: &EnvConfig) -> u64 {
    let json = serde_json::to_string(env).expect("config serializes");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in json.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn decode(indices: &std::ops::Range<usize>, normalized: &DVector<f64>, base: &ParamSet) -> ParamSet {
    let mut out = base.clone();
    for (k, i) in indices.clone().enumerate() {
        let e = &PARAM_TABLE[i];
        out.values[i] = e.lo + normalized[k].clamp(0.0, 1.0) * (e.hi - e.lo);
    }
    out
}

fn normalized_mean(indices: &std::ops::Range<usize>, base: &ParamSet) -> DVector<f64> {
    DVector::from_iterator(
        indices.len(),
        indices.clone().map(|i| {
            let e = &PARAM_TABLE[i];
            ((base.values[i] - e.lo) / (e.hi - e.lo)).clamp(0.0, 1.0)
        }),
    )
}

/// Collision-free variant of the environment for phase 1: exact perception
/// and pristine components, so only tracking quality and timing matter.
fn phase1_env(env: &EnvConfig) -> EnvConfig {
    EnvConfig {
        noise_x: 0.0,
        noise_y: 0.0,
        goal_bias: 0.0,
        defects: DefectModel { p_defect: 0.0, ..env.defects },
        force_defective: false,
        ..env.clone()
    }
}

struct EvalCounter {
    population: usize,
    evals: usize,
}

impl EvalCounter {
    fn next(&mut self) -> (usize, usize) {
        let gen = self.evals / self.population;
        let idx = self.evals % self.population;
        self.evals += 1;
        (gen, idx)
    }
}

fn group_names(indices: &std::ops::Range<usize>) -> Vec<String> {
    indices.clone().map(|i| PARAM_TABLE[i].name.to_string()).collect()
}

/// Phase 1: tune the tracker and agent group on collision-free episodes.
pub fn learn_occt_sia(
    arm: &ArmModel,
    env: &EnvConfig,
    occt_base: &OcctParams,
    sia_base: &SiaParams,
    pim_base: &PimParams,
    cfg: &SlmConfig,
    base: &ParamSet,
    master_seed: u64,
) -> (ParamSet, PhaseReport) {
    let indices = OCCT_SIA_IDX;
    let p1_env = phase1_env(env);
    let hash = env_hash(env);
    let budget = cfg.phase1;
    let mut records: Vec<CandidateRecord> = Vec::new();
    let mut counter = EvalCounter { population: budget.population, evals: 0 };

    let es_cfg = EsConfig {
        pop_size: budget.population,
        elite_size: (budget.population / 2).max(1),
        max_gens: budget.generations,
        ..EsConfig::new(
            normalized_mean(&indices, base),
            budget.sigma0,
            vec![[0.0, 1.0]; indices.len()],
            derive_seed(master_seed, &[0x5101]),
        )
    };

    let (_, es) = cmaes::minimize(&es_cfg, |x| {
        let (gen, idx) = counter.next();
        let candidate = decode(&indices, x, base);
        let occt = candidate.occt_params(occt_base);
        let sia = candidate.sia_params(sia_base);
        let mut costs = Vec::new();
        let mut feas = Vec::new();
        let mut forces = Vec::new();
        let mut times = Vec::new();
        let mut rewards = Vec::new();
        for ep in 0..budget.evals_per_candidate {
            let seed = derive_seed(master_seed, &[0x5102, gen as u64, idx as u64, ep as u64]);
            let task = sample_task(&p1_env, seed);
            let result = run_task_episode(
                arm.clone(),
                &p1_env,
                &occt,
                &sia,
                pim_base,
                task,
                PolicyKind::Fixed,
                seed,
                false,
            );
            match result {
                Ok(r) => {
                    let cost = reward_occt(&r.stats);
                    costs.push(cost);
                    let ok = r.stats.outcome != Outcome::Infeasible;
                    feas.push(ok);
                    if ok {
                        forces.push(r.stats.max_force);
                        times.push(r.stats.t_insert);
                        rewards.push(-cost);
                    }
                }
                Err(_) => {
                    costs.push(200.0);
                    feas.push(false);
                }
            }
        }
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let cost = mean(&costs);
        records.push(CandidateRecord {
            gen,
            idx,
            params: indices.clone().map(|i| candidate.values[i]).collect(),
            param_names: group_names(&indices),
            cost,
            force: mean(&forces),
            time: mean(&times),
            reward: mean(&rewards),
            trials: 1.0,
            t_comp: 0.0,
            feasible: feas.iter().filter(|f| **f).count() as f64 / feas.len() as f64,
        });
        cost
    });

    let best = DVector::from_vec(es.best.clone());
    let learned = decode(&indices, &best, base);
    let report = PhaseReport {
        phase: "occt_sia".into(),
        candidates: records,
        es,
        learned: learned.clone(),
        env_hash: hash,
    };
    (learned, report)
}

/// Phase 2: tune the inference counts on the fast attempt loop over a fixed
/// battery of defective tasks. The perception deviations stay untouched.
pub fn learn_pim(
    env: &EnvConfig,
    cfg: &SlmConfig,
    base: &ParamSet,
    master_seed: u64,
) -> (ParamSet, PhaseReport) {
    let indices = PIM_COUNT_IDX;
    let hash = env_hash(env);
    let budget = cfg.phase2;
    let task_env = EnvConfig { force_defective: true, ..env.clone() };
    let tasks: Vec<_> = (0..budget.evals_per_candidate)
        .map(|i| sample_insertable_task(&task_env, derive_seed(master_seed, &[0x5201, i as u64])))
        .collect();
    let mut records: Vec<CandidateRecord> = Vec::new();
    let mut counter = EvalCounter { population: budget.population, evals: 0 };

    let es_cfg = EsConfig {
        pop_size: budget.population,
        elite_size: (budget.population / 2).max(1),
        max_gens: budget.generations,
        ..EsConfig::new(
            normalized_mean(&indices, base),
            budget.sigma0,
            vec![[0.0, 1.0]; indices.len()],
            derive_seed(master_seed, &[0x5202]),
        )
    };

    let pim_base = base.pim_params(&PimParams::default());
    let (_, es) = cmaes::minimize(&es_cfg, |x| {
        let (gen, idx) = counter.next();
        let candidate = decode(&indices, x, base);
        let pim = candidate.pim_params(&pim_base);
        let mut costs = Vec::new();
        let mut trials = Vec::new();
        let mut tcomps = Vec::new();
        let mut fails = 0usize;
        for (i, task) in tasks.iter().enumerate() {
            let seed = derive_seed(master_seed, &[0x5203, i as u64]);
            let r = run_abstract_insertion(
                task,
                &pim,
                AbstractPolicy::Pim { defects: task_env.defects },
                cfg.max_trials,
                seed,
            );
            costs.push(r.cost);
            trials.push(r.attempts as f64);
            tcomps.push(r.t_comp);
            fails += (!r.success) as usize;
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let cost = mean(&costs);
        records.push(CandidateRecord {
            gen,
            idx,
            params: indices.clone().map(|i| candidate.values[i]).collect(),
            param_names: group_names(&indices),
            cost,
            force: 0.0,
            time: 0.0,
            reward: -cost,
            trials: mean(&trials),
            t_comp: mean(&tcomps),
            feasible: 1.0 - fails as f64 / tasks.len() as f64,
        });
        cost
    });

    let best = DVector::from_vec(es.best.clone());
    let learned = decode(&indices, &best, base);
    let report = PhaseReport {
        phase: "pim".into(),
        candidates: records,
        es,
        learned: learned.clone(),
        env_hash: hash,
    };
    (learned, report)
}

/// Phase 3: joint fine-tune of all eleven parameters in boxes shrunk to
/// `finetune_shrink` of each original range around the learned values,
/// against full episodes with deliberately inaccurate goals.
pub fn finetune(
    arm: &ArmModel,
    env: &EnvConfig,
    occt_base: &OcctParams,
    sia_base: &SiaParams,
    cfg: &SlmConfig,
    start: &ParamSet,
    master_seed: u64,
) -> Result<(ParamSet, PhaseReport), SlmError> {
    let hash = env_hash(env);
    let budget = cfg.phase3;
    let half = cfg.finetune_shrink / 2.0;
    // Shrunk boxes in original units, clipped to the table ranges; the
    // search itself runs in coordinates normalized to each shrunk box.
    let boxes: Vec<[f64; 2]> = PARAM_TABLE
        .iter()
        .zip(start.values.iter())
        .map(|(e, v)| {
            let w = (e.hi - e.lo) * half;
            let lo = (v - w).max(e.lo);
            let hi = (v + w).min(e.hi);
            [lo, hi.max(lo + 1e-12)]
        })
        .collect();
    let decode3 = |x: &DVector<f64>| -> ParamSet {
        ParamSet {
            values: boxes
                .iter()
                .zip(x.iter())
                .map(|(b, v)| b[0] + v.clamp(0.0, 1.0) * (b[1] - b[0]))
                .collect(),
        }
    };
    let mean0 = DVector::from_iterator(
        PARAM_TABLE.len(),
        start
            .values
            .iter()
            .zip(boxes.iter())
            .map(|(v, b)| ((v - b[0]) / (b[1] - b[0])).clamp(0.0, 1.0)),
    );
    let tasks: Vec<_> = (0..budget.evals_per_candidate)
        .map(|i| sample_insertable_task(env, derive_seed(master_seed, &[0x5301, i as u64])))
        .collect();
    let mut records: Vec<CandidateRecord> = Vec::new();
    let mut counter = EvalCounter { population: budget.population, evals: 0 };

    let es_cfg = EsConfig {
        pop_size: budget.population,
        elite_size: (budget.population / 2).max(1),
        max_gens: budget.generations,
        ..EsConfig::new(
            mean0,
            budget.sigma0,
            vec![[0.0, 1.0]; PARAM_TABLE.len()],
            derive_seed(master_seed, &[0x5302]),
        )
    };

    let all_names: Vec<String> = PARAM_TABLE.iter().map(|e| e.name.to_string()).collect();
    let (_, es) = cmaes::minimize(&es_cfg, |x| {
        let (gen, idx) = counter.next();
        let candidate = decode3(x);
        let occt = candidate.occt_params(occt_base);
        let sia = candidate.sia_params(sia_base);
        let pim = candidate.pim_params(&PimParams::default());
        let mut costs = Vec::new();
        let mut feas = Vec::new();
        let mut forces = Vec::new();
        let mut times = Vec::new();
        let mut rewards = Vec::new();
        let mut trials = Vec::new();
        let mut tcomps = Vec::new();
        for (i, task) in tasks.iter().enumerate() {
            let seed = derive_seed(master_seed, &[0x5303, i as u64]);
            let result = run_task_episode(
                arm.clone(),
                env,
                &occt,
                &sia,
                &pim,
                task.clone(),
                PolicyKind::Pim,
                seed,
                false,
            );
            match result {
                Ok(r) => {
                    let cost = reward_occt(&r.stats);
                    costs.push(cost);
                    let ok = r.stats.outcome != Outcome::Infeasible;
                    feas.push(ok);
                    if ok {
                        forces.push(r.stats.max_force);
                        times.push(r.stats.t_insert);
                        rewards.push(-cost);
                        trials.push(r.stats.attempts as f64);
                        tcomps.push(r.t_comp_total);
                    }
                }
                Err(_) => {
                    costs.push(200.0);
                    feas.push(false);
                }
            }
        }
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let cost = mean(&costs);
        records.push(CandidateRecord {
            gen,
            idx,
            params: candidate.values.clone(),
            param_names: all_names.clone(),
            cost,
            force: mean(&forces),
            time: mean(&times),
            reward: mean(&rewards),
            trials: mean(&trials),
            t_comp: mean(&tcomps),
            feasible: feas.iter().filter(|f| **f).count() as f64 / feas.len().max(1) as f64,
        });
        cost
    });

    let learned = decode3(&DVector::from_vec(es.best.clone()));
    let report = PhaseReport {
        phase: "finetune".into(),
        candidates: records,
        es,
        learned: learned.clone(),
        env_hash: hash,
    };
    Ok((learned, report))
}

/// Minimum horizon (seconds) for a rest-to-rest move of distance `d` under
/// the acceleration and velocity boxes.
fn min_move_time(d: f64, b_u: f64, b_v: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    let d_tri = b_v * b_v / b_u;
    if d <= d_tri {
        2.0 * (d / b_u).sqrt()
    } else {
        d / b_v + b_v / b_u
    }
}

/// Validates the horizon learned on collision-free episodes against the
/// longest move the collision-handling loop produces: the retry descent from
/// the lift pose (`dz` above the contact, which sits up to one crossing step
/// above the surface) back down to the seated goal. Phase 1 cannot see this
/// move — its tasks never collide — so the horizon is raised here, within its
/// learnable range, far enough that the whole fine-tune box stays reachable.
pub fn guard_retry_horizon(params: &ParamSet, env: &EnvConfig, occt: &OcctParams, cfg: &SlmConfig) -> ParamSet {
    let mut out = params.clone();
    let dz_entry = &PARAM_TABLE[ParamSet::index_of("dz").expect("dz present")];
    let t_entry = &PARAM_TABLE[ParamSet::index_of("t_occt").expect("t_occt present")];
    let half = cfg.finetune_shrink / 2.0;
    // Worst retry within the fine-tune box: largest dz the box allows.
    let dz_hi = (params.value("dz") + (dz_entry.hi - dz_entry.lo) * half).min(dz_entry.hi);
    let (_, dt) = params.horizon();
    let crossing = occt.b_v * dt;
    let retry = dz_hi + env.insertion_depth + crossing + env.start_jitter_z;
    let needed = min_move_time(retry, occt.b_u, occt.b_v)
        + (t_entry.hi - t_entry.lo) * half // keep the whole shrunk box feasible
        + 2.0 * dt; // discretization slack
    let guarded = params.value("t_occt").max(needed).min(t_entry.hi);
    out.set("t_occt", guarded);
    out
}

/// Per-generation mean of a candidate metric over feasible points (the
/// convention the metric curves use: infeasible data points are not counted).
pub fn generation_means(
    report: &PhaseReport,
    metric: impl Fn(&CandidateRecord) -> f64,
) -> Vec<f64> {
    let max_gen = report.candidates.iter().map(|c| c.gen).max().unwrap_or(0);
    (0..=max_gen)
        .map(|g| {
            let pts: Vec<f64> = report
                .candidates
                .iter()
                .filter(|c| c.gen == g && c.feasible > 0.0)
                .map(&metric)
                .collect();
            pts.iter().sum::<f64>() / pts.len().max(1) as f64
        })
        .collect()
}

/// Per-generation mean episode reward over all candidates. Unlike the metric
/// curves, the reward already defines what an infeasible episode is worth, so
/// nothing is excluded here.
pub fn generation_mean_rewards(report: &PhaseReport) -> Vec<f64> {
    let max_gen = report.candidates.iter().map(|c| c.gen).max().unwrap_or(0);
    (0..=max_gen)
        .map(|g| {
            let pts: Vec<f64> = report
                .candidates
                .iter()
                .filter(|c| c.gen == g)
                .map(|c| -c.cost)
                .collect();
            pts.iter().sum::<f64>() / pts.len().max(1) as f64
        })
        .collect()
}

/// Writes the per-phase scatter/average curves, the long-format
/// parameter-metric table, and the optimizer trace. Returns the paths.
pub fn export_curves(
    reports: &[&PhaseReport],
    dir: &std::path::Path,
) -> std::io::Result<Vec<std::path::PathBuf>> {
    use std::io::Write;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut long = String::from("phase,iter,param,value,metric,metric_value\n");
    for report in reports {
        let is_pim = report.phase == "pim";
        let mut csv = if is_pim {
            String::from("iter,trials,t_comp,reward,feasible,avg_trials,avg_t_comp,avg_reward\n")
        } else {
            String::from("iter,force,time,reward,feasible,avg_force,avg_time,avg_reward\n")
        };
        let (mut sum_a, mut sum_b, mut sum_r, mut n_feas) = (0.0, 0.0, 0.0, 0usize);
        for (iter, c) in report.candidates.iter().enumerate() {
            let (a, b) = if is_pim { (c.trials, c.t_comp) } else { (c.force, c.time) };
            if c.feasible > 0.0 {
                sum_a += a;
                sum_b += b;
                sum_r += c.reward;
                n_feas += 1;
            }
            let n = n_feas.max(1) as f64;
            csv.push_str(&format!(
                "{iter},{a},{b},{},{},{},{},{}\n",
                c.reward,
                c.feasible,
                sum_a / n,
                sum_b / n,
                sum_r / n,
            ));
            let metrics: [(&str, f64); 4] = if is_pim {
                [("trials", c.trials), ("t_comp", c.t_comp), ("reward", c.reward), ("feasible", c.feasible)]
            } else {
                [("force", c.force), ("time", c.time), ("reward", c.reward), ("feasible", c.feasible)]
            };
            for (name, value) in c.param_names.iter().zip(c.params.iter()) {
                for (m, mv) in metrics.iter() {
                    long.push_str(&format!(
                        "{},{iter},{name},{value},{m},{mv}\n",
                        report.phase
                    ));
                }
            }
        }
        let path = dir.join(format!("{}_curve.csv", report.phase));
        std::fs::File::create(&path)?.write_all(csv.as_bytes())?;
        written.push(path);
        let es_path = dir.join(format!("{}_es.csv", report.phase));
        std::fs::File::create(&es_path)?.write_all(report.es.to_csv().as_bytes())?;
        written.push(es_path);
    }
    let long_path = dir.join("param_metrics.csv");
    std::fs::File::create(&long_path)?.write_all(long.as_bytes())?;
    written.push(long_path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_budgets() -> SlmConfig {
        SlmConfig {
            phase1: PhaseBudget { generations: 2, population: 4, evals_per_candidate: 1, sigma0: 0.3 },
            phase2: PhaseBudget { generations: 2, population: 4, evals_per_candidate: 4, sigma0: 0.5 },
            phase3: PhaseBudget { generations: 2, population: 4, evals_per_candidate: 2, sigma0: 0.3 },
            ..SlmConfig::default()
        }
    }

    #[test]
    fn param_table_matches_nominal_values() {
        let p = ParamSet::default();
        assert_eq!(p.value("v_q"), 10.0);
        assert_eq!(p.value("v_s"), 100.0);
        assert_eq!(p.value("t_occt"), 1.0);
        assert_eq!(p.value("rate"), 10.0);
        assert_eq!(p.value("dz"), 0.015);
        assert_eq!(p.value("n_smp"), 500.0);
        assert_eq!(p.value("n_gen"), 10.0);
        assert_eq!(p.value("n_pop"), 50.0);
        assert_eq!(p.value("n_elite"), 15.0);
        assert_eq!(p.value("sigma_x"), 0.0003);
        assert_eq!(p.value("sigma_y"), 0.0003);
        p.validate().unwrap();
    }

    #[test]
    fn horizon_product_stays_in_range() {
        use rand::Rng;
        let mut rng = crate::rng::stream(7, &[0x51]);
        for _ in 0..500 {
            let mut p = ParamSet::default();
            p.set("t_occt", rng.random_range(0.75..3.0));
            p.set("rate", rng.random_range(5.0..20.0));
            let (t, dt) = p.horizon();
            let product = t as f64 * dt;
            assert!(
                (0.75 - 1e-9..=3.0 + 1e-9).contains(&product),
                "t_occt {} rate {} -> product {product}",
                p.value("t_occt"),
                p.value("rate")
            );
        }
    }

    #[test]
    fn pim_rounding_clamps_elites() {
        let mut p = ParamSet::default();
        p.set("n_pop", 3.2);
        p.set("n_elite", 29.7);
        let pim = p.pim_params(&PimParams::default());
        assert_eq!(pim.n_pop, 3);
        assert_eq!(pim.n_elite, 3);
    }

    #[test]
    fn env_hash_tracks_changes() {
        let a = EnvConfig::default();
        let mut b = EnvConfig::default();
        assert_eq!(env_hash(&a), env_hash(&b));
        b.noise_x = 0.2e-3;
        assert_ne!(env_hash(&a), env_hash(&b));
    }

    #[test]
    fn phase1_respects_group_isolation_and_ranges() {
        let arm = ArmModel::reference_6dof();
        let env = EnvConfig::default();
        let base = ParamSet::default();
        let (learned, report) = learn_occt_sia(
            &arm,
            &env,
            &OcctParams::default(),
            &SiaParams::default(),
            &PimParams::default(),
            &tiny_budgets(),
            &base,
            99,
        );
        learned.validate().unwrap();
        // Inference-group values untouched.
        for name in ["n_smp", "n_gen", "n_pop", "n_elite", "sigma_x", "sigma_y"] {
            assert_eq!(learned.value(name), base.value(name), "{name} must not move");
        }
        assert_eq!(report.candidates.len(), 2 * 4);
        for c in &report.candidates {
            for (v, i) in c.params.iter().zip(0..5) {
                let e = &PARAM_TABLE[i];
                assert!(*v >= e.lo - 1e-12 && *v <= e.hi + 1e-12);
            }
        }
    }

    #[test]
    fn phase2_only_moves_counts() {
        let env = EnvConfig::default();
        let base = ParamSet::default();
        let (learned, report) = learn_pim(&env, &tiny_budgets(), &base, 7);
        learned.validate().unwrap();
        for name in ["v_q", "v_s", "t_occt", "rate", "dz", "sigma_x", "sigma_y"] {
            assert_eq!(learned.value(name), base.value(name), "{name} must not move");
        }
        assert!(!report.candidates.is_empty());
        assert!(report.candidates.iter().all(|c| c.t_comp > 0.0));
    }

    #[test]
    fn finetune_stays_in_shrunk_boxes() {
        let arm = ArmModel::reference_6dof();
        let env = EnvConfig::default();
        let cfg = tiny_budgets();
        let start = ParamSet::default();
        let (learned, report) =
            finetune(&arm, &env, &OcctParams::default(), &SiaParams::default(), &cfg, &start, 3)
                .unwrap();
        learned.validate().unwrap();
        for c in &report.candidates {
            for ((v, e), s) in c.params.iter().zip(PARAM_TABLE.iter()).zip(start.values.iter()) {
                let w = (e.hi - e.lo) * cfg.finetune_shrink / 2.0;
                assert!(
                    *v >= (s - w).max(e.lo) - 1e-9 && *v <= (s + w).min(e.hi) + 1e-9,
                    "{} = {v} outside shrunk box around {s}",
                    e.name
                );
            }
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let env = EnvConfig::default();
        let base = ParamSet::default();
        let run = || {
            let (learned, report) = learn_pim(&env, &tiny_budgets(), &base, 11);
            (serde_json::to_string(&learned).unwrap(), serde_json::to_string(&report.candidates).unwrap())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn curves_export_schema_and_running_averages() {
        let env = EnvConfig::default();
        let base = ParamSet::default();
        let (_, report) = learn_pim(&env, &tiny_budgets(), &base, 13);
        let dir = std::env::temp_dir().join("pinsert_slm_test");
        let files = export_curves(&[&report], &dir).unwrap();
        let curve = std::fs::read_to_string(&files[0]).unwrap();
        let mut lines = curve.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,trials,t_comp,reward,feasible,avg_trials,avg_t_comp,avg_reward"
        );
        // Running averages recompute exactly from the scatter columns.
        let (mut s_tr, mut s_tc, mut s_r, mut n) = (0.0, 0.0, 0.0, 0usize);
        for line in lines {
            let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            if f[4] > 0.0 {
                s_tr += f[1];
                s_tc += f[2];
                s_r += f[3];
                n += 1;
            }
            let m = n.max(1) as f64;
            assert_eq!(f[5], s_tr / m);
            assert_eq!(f[6], s_tc / m);
            assert_eq!(f[7], s_r / m);
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
