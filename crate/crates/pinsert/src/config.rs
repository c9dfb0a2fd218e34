//! Run configuration: one structured TOML file with sections for the arm,
//! tracker, agent, inference, environment, and tuner, plus the master seed
//! and output directory.
//!
//! Every parameter has a default; unknown keys are rejected. Precedence is
//! file < environment-variable overrides (`PINSERT_SEED`, `PINSERT_OUT`) <
//! command-line flags.

use crate::kinematics::{ArmModel, DhRow, KinematicsError};
use crate::occt::OcctParams;
use crate::pim::{ComponentGeometry, DefectModel, PimParams};
use crate::sia::SiaParams;
use crate::simenv::EnvConfig;
use crate::slm::{PhaseBudget, SlmConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("invalid arm model: {0}")]
    Arm(#[from] KinematicsError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmSection {
    /// Per-joint rows `[a, alpha, d, theta_offset]`.
    pub dh: Vec<[f64; 4]>,
    /// Per-joint `[lo, hi]` radians.
    pub joint_limits: Vec<[f64; 2]>,
}

impl Default for ArmSection {
    fn default() -> Self {
        let model = ArmModel::reference_6dof();
        ArmSection {
            dh: model.dh().iter().map(|r| [r.a, r.alpha, r.d, r.theta_offset]).collect(),
            joint_limits: model.joint_limits().to_vec(),
        }
    }
}

impl ArmSection {
    pub fn build(&self) -> Result<ArmModel, KinematicsError> {
        let dh = self
            .dh
            .iter()
            .map(|r| DhRow { a: r[0], alpha: r[1], d: r[2], theta_offset: r[3] })
            .collect();
        ArmModel::new(dh, self.joint_limits.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OcctSection {
    pub v_q: f64,
    pub v_s: f64,
    /// Planned execution time, seconds.
    pub horizon_s: f64,
    /// Planning rate 1/Δt, hertz.
    pub rate_hz: f64,
    pub b_u: f64,
    pub b_v: f64,
    pub replan_error_threshold: f64,
}

impl Default for OcctSection {
    fn default() -> Self {
        // The nominal one-second horizon cannot reach the default descent
        // under the 0.02 m/s² acceleration bound, so the operational default
        // is longer; the tuner still explores the nominal range.
        OcctSection {
            v_q: 10.0,
            v_s: 100.0,
            horizon_s: 2.5,
            rate_hz: 10.0,
            b_u: 0.02,
            b_v: 0.02,
            replan_error_threshold: 0.002,
        }
    }
}

impl OcctSection {
    pub fn build(&self) -> OcctParams {
        let t_steps = (self.horizon_s * self.rate_hz).round().max(2.0) as usize;
        OcctParams {
            v_q: self.v_q,
            v_s: self.v_s,
            t_steps,
            dt: 1.0 / self.rate_hz,
            b_u: self.b_u,
            b_v: self.b_v,
            replan_error_threshold: self.replan_error_threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SiaSection {
    pub dz: f64,
    pub force_threshold: f64,
    pub max_failures: u32,
    pub success_prob_threshold: f64,
    pub xy_tolerance: f64,
    pub goal_tolerance: f64,
}

impl Default for SiaSection {
    fn default() -> Self {
        let p = SiaParams::default();
        SiaSection {
            dz: p.dz,
            force_threshold: p.force_threshold,
            max_failures: p.max_failures,
            success_prob_threshold: p.success_prob_threshold,
            xy_tolerance: p.xy_tolerance,
            goal_tolerance: p.goal_tolerance,
        }
    }
}

impl SiaSection {
    pub fn build(&self) -> SiaParams {
        SiaParams {
            dz: self.dz,
            force_threshold: self.force_threshold,
            max_failures: self.max_failures,
            success_prob_threshold: self.success_prob_threshold,
            xy_tolerance: self.xy_tolerance,
            goal_tolerance: self.goal_tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PimSection {
    pub n_smp: usize,
    pub n_gen: usize,
    pub n_pop: usize,
    pub n_elite: usize,
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Charge inference time from the deterministic count model instead of
    /// wall clock; required for reproducible artifacts.
    pub synthetic_tcomp: bool,
}

impl Default for PimSection {
    fn default() -> Self {
        let p = PimParams::default();
        PimSection {
            n_smp: p.n_smp,
            n_gen: p.n_gen,
            n_pop: p.n_pop,
            n_elite: p.n_elite,
            sigma_x: p.sigma_x,
            sigma_y: p.sigma_y,
            synthetic_tcomp: true,
        }
    }
}

impl PimSection {
    pub fn build(&self) -> PimParams {
        PimParams {
            n_smp: self.n_smp,
            n_gen: self.n_gen,
            n_pop: self.n_pop,
            n_elite: self.n_elite,
            sigma_x: self.sigma_x,
            sigma_y: self.sigma_y,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub board_center_x: f64,
    pub board_center_y: f64,
    pub surface_z: f64,
    pub insertion_depth: f64,
    pub rows: usize,
    pub cols: usize,
    pub pin_pitch: f64,
    pub pin_radius: f64,
    pub hole_radius: f64,
    pub p_defect: f64,
    pub bend_sigma: f64,
    pub bend_max: f64,
    pub noise_x: f64,
    pub noise_y: f64,
    pub goal_bias: f64,
    pub force_defective: bool,
    pub k_c: f64,
    pub f_cap: f64,
    pub tick_dt: f64,
    pub delay_ticks: usize,
    pub start_height: f64,
    pub start_jitter: f64,
    pub start_jitter_z: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        let e = EnvConfig::default();
        EnvSection {
            board_center_x: e.board_center_x,
            board_center_y: e.board_center_y,
            surface_z: e.surface_z,
            insertion_depth: e.insertion_depth,
            rows: e.geometry.rows,
            cols: e.geometry.cols,
            pin_pitch: e.geometry.pin_pitch,
            pin_radius: e.geometry.pin_radius,
            hole_radius: e.geometry.hole_radius,
            p_defect: e.defects.p_defect,
            bend_sigma: e.defects.sigma,
            bend_max: e.defects.max_offset,
            noise_x: e.noise_x,
            noise_y: e.noise_y,
            goal_bias: e.goal_bias,
            force_defective: e.force_defective,
            k_c: e.k_c,
            f_cap: e.f_cap,
            tick_dt: e.tick_dt,
            delay_ticks: e.delay_ticks,
            start_height: e.start_height,
            start_jitter: e.start_jitter,
            start_jitter_z: e.start_jitter_z,
        }
    }
}

impl EnvSection {
    pub fn build(&self) -> EnvConfig {
        EnvConfig {
            board_center_x: self.board_center_x,
            board_center_y: self.board_center_y,
            surface_z: self.surface_z,
            insertion_depth: self.insertion_depth,
            geometry: ComponentGeometry {
                rows: self.rows,
                cols: self.cols,
                pin_pitch: self.pin_pitch,
                pin_radius: self.pin_radius,
                hole_radius: self.hole_radius,
            },
            defects: DefectModel {
                p_defect: self.p_defect,
                sigma: self.bend_sigma,
                max_offset: self.bend_max,
            },
            noise_x: self.noise_x,
            noise_y: self.noise_y,
            goal_bias: self.goal_bias,
            force_defective: self.force_defective,
            k_c: self.k_c,
            f_cap: self.f_cap,
            tick_dt: self.tick_dt,
            delay_ticks: self.delay_ticks,
            start_height: self.start_height,
            start_jitter: self.start_jitter,
            start_jitter_z: self.start_jitter_z,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlmSection {
    pub phase1: PhaseBudget,
    pub phase2: PhaseBudget,
    pub phase3: PhaseBudget,
    pub sigma0_frac: f64,
    pub finetune_shrink: f64,
    pub max_trials: u32,
}

impl Default for SlmSection {
    fn default() -> Self {
        let s = SlmConfig::default();
        SlmSection {
            phase1: s.phase1,
            phase2: s.phase2,
            phase3: s.phase3,
            sigma0_frac: s.sigma0_frac,
            finetune_shrink: s.finetune_shrink,
            max_trials: s.max_trials,
        }
    }
}

impl SlmSection {
    pub fn build(&self) -> SlmConfig {
        SlmConfig {
            phase1: self.phase1,
            phase2: self.phase2,
            phase3: self.phase3,
            sigma0_frac: self.sigma0_frac,
            finetune_shrink: self.finetune_shrink,
            max_trials: self.max_trials,
        }
    }
}

/// The whole run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,
    pub arm: ArmSection,
    pub occt: OcctSection,
    pub sia: SiaSection,
    pub pim: PimSection,
    pub env: EnvSection,
    pub slm: SlmSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            out_dir: "out".into(),
            arm: ArmSection::default(),
            occt: OcctSection::default(),
            sia: SiaSection::default(),
            pim: PimSection::default(),
            env: EnvSection::default(),
            slm: SlmSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `PINSERT_*` environment-variable overrides (between the file
    /// and any command-line flags).
    pub fn apply_env_overrides<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) {
        for (k, v) in vars {
            match k.as_str() {
                "PINSERT_SEED" => {
                    if let Ok(seed) = v.parse() {
                        self.seed = seed;
                    }
                }
                "PINSERT_OUT" => self.out_dir = v,
                _ => {}
            }
        }
    }

    /// Cross-checks every section's invariants.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        if let Err(e) = self.arm.build() {
            errors.push(format!("arm: {e}"));
        }
        let occt = self.occt.build();
        if let Err(e) = occt.validate() {
            errors.push(format!("occt: {e}"));
        }
        if let Err(e) = self.sia.build().validate() {
            errors.push(format!("sia: {e}"));
        }
        if let Err(e) = self.pim.build().validate() {
            errors.push(format!("pim: {e}"));
        }
        if let Err(e) = self.env.build().validate() {
            errors.push(format!("env: {e}"));
        }
        if let Err(e) = self.slm.build().validate() {
            errors.push(format!("slm: {e}"));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errors.join("; ")))
        }
    }
}
