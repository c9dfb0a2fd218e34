//! Command implementations behind the binary: single insertions, the
//! inference-versus-random benchmark, the three-phase learning protocol, and
//! config validation. Each command writes its artifacts (CSV and JSON) under
//! the configured output directory and every number it emits derives from the
//! master seed.

use crate::config::RunConfig;
use crate::episode::{
    run_abstract_insertion, run_episode, AbstractPolicy, PimPolicy, RetryPolicy,
};
use crate::rng::derive_seed;
use crate::sia::Outcome;
use crate::simenv::{sample_task, SimEnv};
use crate::slm::{self, LearnReport, ParamSet, PhaseReport};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("task failed: {0}")]
    TaskFailure(String),
    #[error("missing prerequisite: {0}")]
    Prerequisite(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit code: 0 success, 2 task failure, 3 config error,
    /// 4 prerequisite error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::TaskFailure(_) => 2,
            CliError::Prerequisite(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

/// Machine-readable failure record written next to the other artifacts.
#[derive(Debug, Serialize)]
struct ErrorJson<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

fn write_error_json(dir: &Path, kind: &str, message: String, exit_code: i32) {
    let payload = ErrorJson { error: kind, message, exit_code };
    let text = serde_json::to_string_pretty(&payload).expect("error serializes");
    let _ = write_file(&dir.join("error.json"), &text);
}

fn validated(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))
}

/// Artifact paths produced by [`cmd_insert`].
#[derive(Debug)]
pub struct InsertArtifacts {
    pub stats: crate::sia::EpisodeStats,
    pub dir: PathBuf,
}

/// Runs one full insertion episode and writes the trajectory CSVs, the event
/// log, the episode statistics, and belief snapshots.
pub fn cmd_insert(cfg: &RunConfig, task_seed: Option<u64>) -> Result<InsertArtifacts, CliError> {
    validated(cfg)?;
    let dir = PathBuf::from(&cfg.out_dir).join("insert");
    std::fs::create_dir_all(&dir)?;

    let arm = cfg.arm.build().map_err(|e| CliError::Config(e.to_string()))?;
    let env_cfg = cfg.env.build();
    let occt = cfg.occt.build();
    let sia = cfg.sia.build();
    let pim = cfg.pim.build();
    let task_seed = task_seed.unwrap_or_else(|| derive_seed(cfg.seed, &[0x17a5]));
    let task = sample_task(&env_cfg, task_seed);
    write_file(
        &dir.join("task.json"),
        &serde_json::to_string_pretty(&task).expect("task serializes"),
    )?;
    let perceived = task.perceived_goal;
    let geometry = task.spec.geometry.clone();

    let mut policy = RetryPolicy::Pim(PimPolicy::new(
        pim,
        &geometry,
        &env_cfg.defects,
        &perceived,
        task_seed,
        !cfg.pim.synthetic_tcomp,
    ));
    if let RetryPolicy::Pim(p) = &policy {
        write_file(&dir.join("belief_initial.csv"), &p.belief.to_csv())?;
    }

    let mut env = SimEnv::new(arm, env_cfg, task)
        .map_err(|e| CliError::Config(format!("environment setup failed: {e}")))?;
    let result = run_episode(&mut env, &occt, &sia, &mut policy, task_seed)
        .map_err(|e| CliError::Config(format!("episode failed: {e}")))?;

    write_file(&dir.join("joints.csv"), &result.joint_log.to_csv())?;
    write_file(&dir.join("cartesian.csv"), &result.cartesian_log.to_csv())?;
    let events: String = result
        .events
        .iter()
        .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
        .collect();
    write_file(&dir.join("events.jsonl"), &events)?;
    write_file(
        &dir.join("stats.json"),
        &serde_json::to_string_pretty(&result.stats).expect("stats serialize"),
    )?;
    write_file(
        &dir.join("infer_calls.json"),
        &serde_json::to_string_pretty(&result.infer_calls).expect("records serialize"),
    )?;
    if let RetryPolicy::Pim(p) = &policy {
        write_file(&dir.join("belief_final.csv"), &p.belief.to_csv())?;
    }

    match result.stats.outcome {
        Outcome::Success => Ok(InsertArtifacts { stats: result.stats, dir }),
        Outcome::Fail => {
            let msg = format!("insertion failed after {} attempts", result.stats.attempts);
            write_error_json(&dir, "insertion_failed", msg.clone(), 2);
            Err(CliError::TaskFailure(msg))
        }
        Outcome::Infeasible => {
            let msg = "trajectory planning infeasible".to_string();
            write_error_json(&dir, "planning_infeasible", msg.clone(), 2);
            Err(CliError::TaskFailure(msg))
        }
    }
}

/// Benchmark summary comparing belief-driven retries to Gaussian redraws.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchReport {
    pub tasks: u64,
    pub pim_mean_attempts: f64,
    pub random_mean_attempts: f64,
    pub pim_success_rate: f64,
    pub random_success_rate: f64,
    /// `random_mean_attempts - pim_mean_attempts`.
    pub advantage: f64,
}

/// Runs matched seeded task sets under the inference policy and under
/// Gaussian-random retry; writes a per-task CSV and a summary JSON.
pub fn cmd_benchmark_pim(cfg: &RunConfig, n_tasks: u64) -> Result<BenchReport, CliError> {
    validated(cfg)?;
    if n_tasks == 0 {
        return Err(CliError::Config("benchmark needs at least one task".into()));
    }
    let dir = PathBuf::from(&cfg.out_dir).join("benchmark");
    std::fs::create_dir_all(&dir)?;
    let env_cfg = cfg.env.build();
    let pim = cfg.pim.build();
    let max_trials = cfg.sia.max_failures;

    let mut csv = String::from("task,pim_attempts,pim_success,random_attempts,random_success\n");
    let (mut pa, mut ra, mut ps, mut rs) = (0.0, 0.0, 0u64, 0u64);
    for i in 0..n_tasks {
        let task_seed = derive_seed(cfg.seed, &[0xbe7c, i]);
        let task = sample_task(&env_cfg, task_seed);
        let a = run_abstract_insertion(
            &task,
            &pim,
            AbstractPolicy::Pim { defects: env_cfg.defects },
            max_trials,
            task_seed,
        );
        let b = run_abstract_insertion(
            &task,
            &pim,
            AbstractPolicy::Random { sigma_x: pim.sigma_x, sigma_y: pim.sigma_y },
            max_trials,
            task_seed,
        );
        pa += a.attempts as f64;
        ra += b.attempts as f64;
        ps += a.success as u64;
        rs += b.success as u64;
        csv.push_str(&format!(
            "{i},{},{},{},{}\n",
            a.attempts, a.success as u8, b.attempts, b.success as u8
        ));
    }
    let report = BenchReport {
        tasks: n_tasks,
        pim_mean_attempts: pa / n_tasks as f64,
        random_mean_attempts: ra / n_tasks as f64,
        pim_success_rate: ps as f64 / n_tasks as f64,
        random_success_rate: rs as f64 / n_tasks as f64,
        advantage: (ra - pa) / n_tasks as f64,
    };
    write_file(&dir.join("benchmark.csv"), &csv)?;
    write_file(
        &dir.join("summary.json"),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    Ok(report)
}

/// Which learning phases to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LearnPhase {
    OcctSia,
    Pim,
    Finetune,
    All,
}

impl std::str::FromStr for LearnPhase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "occt_sia" => Ok(LearnPhase::OcctSia),
            "pim" => Ok(LearnPhase::Pim),
            "finetune" => Ok(LearnPhase::Finetune),
            "all" => Ok(LearnPhase::All),
            other => Err(format!("unknown phase '{other}' (occt_sia|pim|finetune|all)")),
        }
    }
}

/// Stored output of one learning phase, reloadable for later phases.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhaseOutput {
    pub phase: String,
    pub master_seed: u64,
    pub env_hash: u64,
    pub values: Vec<f64>,
}

fn write_phase_output(
    dir: &Path,
    phase: &str,
    seed: u64,
    env_hash: u64,
    params: &ParamSet,
) -> Result<(), CliError> {
    let out = PhaseOutput {
        phase: phase.to_string(),
        master_seed: seed,
        env_hash,
        values: params.values.clone(),
    };
    write_file(
        &dir.join(format!("params_{phase}.json")),
        &serde_json::to_string_pretty(&out).expect("params serialize"),
    )
}

fn load_phase_output(dir: &Path, phase: &str, env_hash: u64) -> Result<ParamSet, CliError> {
    let path = dir.join(format!("params_{phase}.json"));
    let text = std::fs::read_to_string(&path).map_err(|_| {
        CliError::Prerequisite(format!(
            "phase '{phase}' output not found at {}; run it first",
            path.display()
        ))
    })?;
    let out: PhaseOutput = serde_json::from_str(&text)
        .map_err(|e| CliError::Prerequisite(format!("cannot parse {}: {e}", path.display())))?;
    if out.env_hash != env_hash {
        return Err(CliError::Prerequisite(format!(
            "environment changed since phase '{phase}' ran (hash {:#x} vs {:#x})",
            out.env_hash, env_hash
        )));
    }
    let params = ParamSet { values: out.values };
    params
        .validate()
        .map_err(|e| CliError::Prerequisite(format!("stored phase '{phase}' parameters invalid: {e}")))?;
    Ok(params)
}

/// Runs the requested learning phase(s); writes learned parameters, the
/// learning curves, and the full report.
pub fn cmd_learn(
    cfg: &RunConfig,
    phase: LearnPhase,
    gens_override: Option<usize>,
) -> Result<LearnReport, CliError> {
    validated(cfg)?;
    let dir = PathBuf::from(&cfg.out_dir).join("learn");
    std::fs::create_dir_all(&dir)?;
    let arm = cfg.arm.build().map_err(|e| CliError::Config(e.to_string()))?;
    let env_cfg = cfg.env.build();
    let occt = cfg.occt.build();
    let sia = cfg.sia.build();
    let pim = cfg.pim.build();
    let mut slm_cfg = cfg.slm.build();
    if let Some(g) = gens_override {
        slm_cfg.phase1.generations = g;
        slm_cfg.phase2.generations = g;
        slm_cfg.phase3.generations = g;
    }
    let hash = slm::env_hash(&env_cfg);
    let seed = cfg.seed;

    let mut phases: Vec<PhaseReport> = Vec::new();
    let mut current = ParamSet::default();

    let run_phase1 = matches!(phase, LearnPhase::OcctSia | LearnPhase::All);
    let run_phase2 = matches!(phase, LearnPhase::Pim | LearnPhase::All);
    let run_phase3 = matches!(phase, LearnPhase::Finetune | LearnPhase::All);

    if run_phase1 {
        let (learned, report) =
            slm::learn_occt_sia(&arm, &env_cfg, &occt, &sia, &pim, &slm_cfg, &current, seed);
        write_phase_output(&dir, "occt_sia", seed, hash, &learned)?;
        phases.push(report);
        current = learned;
    } else if matches!(phase, LearnPhase::Pim) {
        // Chain onto a previous low-level phase when available.
        if let Ok(prior) = load_phase_output(&dir, "occt_sia", hash) {
            current = prior;
        }
    }

    if run_phase2 {
        let (learned, report) = slm::learn_pim(&env_cfg, &slm_cfg, &current, seed);
        write_phase_output(&dir, "pim", seed, hash, &learned)?;
        phases.push(report);
        current = learned;
    }

    if run_phase3 {
        if !matches!(phase, LearnPhase::All) {
            let p1 = load_phase_output(&dir, "occt_sia", hash)?;
            let p2 = load_phase_output(&dir, "pim", hash)?;
            // Phase 2 starts from phase 1's values and only moves the counts,
            // so its stored output carries both groups.
            let _ = p1;
            current = p2;
        }
        let guarded = slm::guard_retry_horizon(&current, &env_cfg, &occt, &slm_cfg);
        let (learned, report) =
            slm::finetune(&arm, &env_cfg, &occt, &sia, &slm_cfg, &guarded, seed)
                .map_err(|e| CliError::Prerequisite(e.to_string()))?;
        write_phase_output(&dir, "finetune", seed, hash, &learned)?;
        phases.push(report);
        current = learned;
    }

    let report = LearnReport {
        master_seed: seed,
        env_hash: hash,
        phases,
        final_params: current,
    };
    let refs: Vec<&PhaseReport> = report.phases.iter().collect();
    slm::export_curves(&refs, &dir)?;
    write_file(
        &dir.join("learn_report.json"),
        &serde_json::to_string(&report).expect("report serializes"),
    )?;
    write_phase_output(&dir, "final", seed, hash, &report.final_params)?;
    Ok(report)
}

/// Validates the configuration and reports the result.
pub fn cmd_validate(cfg: &RunConfig) -> Result<(), CliError> {
    validated(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slm::PhaseBudget;

    fn quiet_config(dir: &Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.seed = 5;
        cfg.out_dir = dir.to_string_lossy().into_owned();
        cfg.env.noise_x = 0.0;
        cfg.env.noise_y = 0.0;
        cfg.env.goal_bias = 0.0;
        cfg.env.p_defect = 0.0;
        cfg.env.start_jitter = 0.0;
        cfg.env.start_jitter_z = 0.0;
        cfg
    }

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("pinsert_cli_{name}"));
        let _ = std::fs::remove_dir_all(&dir);
        dir
    }

    #[test]
    fn insert_trivial_task_succeeds() {
        let dir = tmp("insert");
        let cfg = quiet_config(&dir);
        let art = cmd_insert(&cfg, None).unwrap();
        assert_eq!(art.stats.outcome, Outcome::Success);
        assert_eq!(art.stats.attempts, 1);
        assert_eq!(art.stats.collisions, 0);
        for f in ["joints.csv", "cartesian.csv", "events.jsonl", "stats.json", "task.json", "belief_initial.csv", "belief_final.csv"] {
            assert!(dir.join("insert").join(f).exists(), "{f} missing");
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn insert_uninsertable_component_exits_with_error_json() {
        let dir = tmp("insert_fail");
        let mut cfg = quiet_config(&dir);
        // Opposite bends beyond the clearance: no pose fits.
        cfg.env.p_defect = 1.0;
        cfg.env.bend_sigma = 0.45e-3;
        cfg.env.bend_max = 0.45e-3;
        let err = cmd_insert(&cfg, Some(3)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(dir.join("insert").join("error.json").exists());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn benchmark_trivial_task_single_attempt_both() {
        let dir = tmp("bench");
        let cfg = quiet_config(&dir);
        let report = cmd_benchmark_pim(&cfg, 1).unwrap();
        assert_eq!(report.pim_mean_attempts, 1.0);
        assert_eq!(report.random_mean_attempts, 1.0);
        assert!(dir.join("benchmark").join("benchmark.csv").exists());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn benchmark_identical_seeds_identical_reports() {
        let dir = tmp("bench_det");
        let mut cfg = RunConfig::default();
        cfg.seed = 31;
        cfg.out_dir = dir.to_string_lossy().into_owned();
        let a = cmd_benchmark_pim(&cfg, 5).unwrap();
        let csv_a = std::fs::read(dir.join("benchmark").join("benchmark.csv")).unwrap();
        let b = cmd_benchmark_pim(&cfg, 5).unwrap();
        let csv_b = std::fs::read(dir.join("benchmark").join("benchmark.csv")).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(csv_a, csv_b);
        std::fs::remove_dir_all(&dir).ok();
    }

    fn tiny_learn_config(dir: &Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.seed = 7;
        cfg.out_dir = dir.to_string_lossy().into_owned();
        cfg.slm.phase1 = PhaseBudget { generations: 2, population: 4, evals_per_candidate: 1, sigma0: 0.3 };
        cfg.slm.phase2 = PhaseBudget { generations: 2, population: 4, evals_per_candidate: 3, sigma0: 0.5 };
        cfg.slm.phase3 = PhaseBudget { generations: 2, population: 4, evals_per_candidate: 2, sigma0: 0.3 };
        cfg
    }

    #[test]
    fn learn_all_smoke_writes_artifacts() {
        let dir = tmp("learn_all");
        let cfg = tiny_learn_config(&dir);
        let report = cmd_learn(&cfg, LearnPhase::All, None).unwrap();
        assert_eq!(report.phases.len(), 3);
        let learn = dir.join("learn");
        for f in [
            "params_occt_sia.json",
            "params_pim.json",
            "params_finetune.json",
            "params_final.json",
            "occt_sia_curve.csv",
            "pim_curve.csv",
            "finetune_curve.csv",
            "occt_sia_es.csv",
            "param_metrics.csv",
            "learn_report.json",
        ] {
            assert!(learn.join(f).exists(), "{f} missing");
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn finetune_without_priors_is_prerequisite_error() {
        let dir = tmp("learn_pre");
        let cfg = tiny_learn_config(&dir);
        let err = cmd_learn(&cfg, LearnPhase::Finetune, None).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn finetune_rejects_changed_environment() {
        let dir = tmp("learn_hash");
        let cfg = tiny_learn_config(&dir);
        cmd_learn(&cfg, LearnPhase::OcctSia, None).unwrap();
        cmd_learn(&cfg, LearnPhase::Pim, None).unwrap();
        let mut changed = cfg.clone();
        changed.env.noise_x = 0.2e-3;
        let err = cmd_learn(&changed, LearnPhase::Finetune, None).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        // Unchanged environment proceeds.
        cmd_learn(&cfg, LearnPhase::Finetune, None).unwrap();
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn validate_config_command() {
        let mut cfg = RunConfig::default();
        cmd_validate(&cfg).unwrap();
        cfg.occt.b_u = -1.0;
        assert_eq!(cmd_validate(&cfg).unwrap_err().exit_code(), 3);
    }
}
