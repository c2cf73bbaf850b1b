//! Run configuration. Angles are in degrees here and converted to radians
//! when the core types are built.

use std::path::{Path, PathBuf};

use armsynth_core::fitness::{FitnessSettings, FitnessWeights, IkSettings};
use armsynth_core::kinematics::{ContinuityNorm, DesignLimits, DhLink};
use armsynth_core::optimize::joint_swarm::JointSwarmConfig;
use armsynth_core::optimize::{Algorithm, PsoConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub alpha_min_deg: f64,
    pub alpha_max_deg: f64,
    pub a_max: f64,
    pub d_max: f64,
    pub q_min_deg: f64,
    pub q_max_deg: f64,
    pub length_min: f64,
    pub length_max: f64,
    pub axis_tolerance: f64,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        let d = DesignLimits::default();
        Self {
            alpha_min_deg: -90.0,
            alpha_max_deg: 90.0,
            a_max: d.a_max,
            d_max: d.d_max,
            q_min_deg: -180.0,
            q_max_deg: 180.0,
            length_min: d.length_min,
            length_max: d.length_max,
            axis_tolerance: d.axis_tolerance,
        }
    }
}

impl LimitsConfig {
    pub fn to_limits(&self) -> DesignLimits {
        DesignLimits {
            alpha_min: self.alpha_min_deg.to_radians(),
            alpha_max: self.alpha_max_deg.to_radians(),
            a_max: self.a_max,
            d_max: self.d_max,
            q_min: self.q_min_deg.to_radians(),
            q_max: self.q_max_deg.to_radians(),
            length_min: self.length_min,
            length_max: self.length_max,
            axis_tolerance: self.axis_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    pub w0: f64,
    pub w: Vec<f64>,
    pub lambda_f: f64,
    pub lambda_e: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        let s = FitnessWeights::scenario_one();
        Self {
            w0: s.orientation,
            w: s.position,
            lambda_f: s.lambda_f,
            lambda_e: s.lambda_e,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IkConfig {
    pub epsilon_deg: f64,
    pub ee_gate: f64,
    pub continuity_norm: ContinuityNorm,
    pub start_restarts: usize,
    pub reach_restarts: usize,
    pub solver: JointSwarmConfig,
}

impl Default for IkConfig {
    fn default() -> Self {
        let d = IkSettings::default();
        Self {
            epsilon_deg: 10.0,
            ee_gate: d.ee_gate,
            continuity_norm: d.continuity_norm,
            start_restarts: d.start_restarts,
            reach_restarts: d.reach_restarts,
            solver: d.solver,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolConfig {
    pub alpha_deg: f64,
    pub a: f64,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dofs: Vec<usize>,
    pub periods: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dofs: vec![3],
            periods: vec![2, 3, 4, 5],
            seeds: (0..10).collect(),
        }
    }
}

/// Single JSON document describing a run; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Option<PathBuf>,
    pub dof: usize,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    pub delta_m: f64,
    pub tool: Option<ToolConfig>,
    pub limits: LimitsConfig,
    pub weights: WeightsConfig,
    pub ik: IkConfig,
    pub pso: PsoConfig,
    pub grid: GridConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: None,
            dof: 3,
            algorithm: Algorithm::RaPso,
            seed: 0,
            out: PathBuf::from("results"),
            workers: 0,
            delta_m: 0.01,
            tool: None,
            limits: LimitsConfig::default(),
            weights: WeightsConfig::default(),
            ik: IkConfig::default(),
            pso: PsoConfig::default(),
            grid: GridConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("bad config {}: {e}", path.display())))?;
        // Relative task paths are taken relative to the config file.
        if let (Some(task), Some(dir)) = (cfg.task.as_mut(), path.parent()) {
            if task.is_relative() {
                *task = dir.join(&*task);
            }
        }
        Ok(cfg)
    }

    pub fn tool(&self) -> Option<DhLink> {
        self.tool.map(|t| DhLink::new(t.alpha_deg.to_radians(), t.a, t.d))
    }

    /// Weights with `w0 + sum(w)` rescaled to one if needed.
    pub fn weights(&self) -> Result<FitnessWeights, CliError> {
        let raw = FitnessWeights {
            orientation: self.weights.w0,
            position: self.weights.w.clone(),
            lambda_f: self.weights.lambda_f,
            lambda_e: self.weights.lambda_e,
        };
        let sum = raw.sum();
        if (sum - 1.0).abs() <= armsynth_core::fitness::WEIGHT_SUM_TOLERANCE {
            return Ok(raw);
        }
        let fixed = raw
            .normalized()
            .ok_or_else(|| CliError::input("orientation and position weights are all zero"))?;
        log::warn!("weights sum to {sum}; rescaled to sum to 1");
        Ok(fixed)
    }

    pub fn fitness_settings(&self) -> Result<FitnessSettings, CliError> {
        Ok(FitnessSettings {
            limits: self.limits.to_limits(),
            weights: self.weights()?,
            ik: IkSettings {
                epsilon: self.ik.epsilon_deg.to_radians(),
                continuity_norm: self.ik.continuity_norm,
                ee_gate: self.ik.ee_gate,
                solver: self.ik.solver,
                start_restarts: self.ik.start_restarts,
                reach_restarts: self.ik.reach_restarts,
            },
            delta_m: self.delta_m,
        })
    }

    pub fn pso(&self) -> PsoConfig {
        self.pso
    }
}
