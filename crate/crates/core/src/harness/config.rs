//! Declarative run configuration (TOML, dotted keys allowed).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curriculum::CurriculumMode;
use crate::encoder::EncoderConfig;
use crate::env::EnvConfig;
use crate::nn::AdamConfig;
use crate::ppo::{EvalConfig, PpoConfig, TrainConfig};
use crate::sensor::LidarConfig;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// Per-episode settings shared by every level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvSettings {
    pub obstacle_count: usize,
    pub obstacle_size: usize,
    pub max_steps: usize,
    pub success_threshold: f64,
}

impl Default for EnvSettings {
    fn default() -> Self {
        let d = EnvConfig::default();
        Self {
            obstacle_count: d.obstacle_count,
            obstacle_size: d.obstacle_size,
            max_steps: d.max_steps,
            success_threshold: d.success_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: CurriculumMode,
    /// Built-in map names or level numbers, easiest first.
    pub levels: Vec<String>,
    pub envs_per_level: usize,
    /// One training run per seed.
    pub seeds: Vec<u64>,
    pub transition_budget: u64,
    pub precision: Precision,
    pub parallel: bool,
    pub output_dir: PathBuf,
    pub env: EnvSettings,
    pub encoder: EncoderConfig,
    pub lidar: LidarConfig,
    pub ppo: PpoConfig,
    pub adam: AdamConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            mode: t.mode,
            levels: (1..=crate::maps::LEVEL_COUNT).map(|l| l.to_string()).collect(),
            envs_per_level: t.envs_per_level,
            seeds: vec![0, 1, 2],
            transition_budget: t.transition_budget,
            precision: Precision::F64,
            parallel: false,
            output_dir: PathBuf::from("runs"),
            env: EnvSettings::default(),
            encoder: EncoderConfig::default(),
            lidar: LidarConfig::default(),
            ppo: t.ppo,
            adam: t.adam,
            eval: t.eval,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| HarnessError::MissingFile(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Environment config for one level of the ladder.
    pub fn env_config(&self, map_id: &str) -> EnvConfig {
        EnvConfig {
            map_id: map_id.to_string(),
            obstacle_count: self.env.obstacle_count,
            obstacle_size: self.env.obstacle_size,
            max_steps: self.env.max_steps,
            success_threshold: self.env.success_threshold,
            encoder: self.encoder,
            lidar: self.lidar,
            seed: 0,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            mode: self.mode,
            levels: self.levels.iter().map(|l| self.env_config(l)).collect(),
            envs_per_level: self.envs_per_level,
            transition_budget: self.transition_budget,
            seed,
            parallel: self.parallel,
            ppo: self.ppo,
            adam: self.adam,
            eval: self.eval,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.levels.is_empty() {
            return Err(HarnessError::Config("at least one level is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        if self.envs_per_level == 0 {
            return Err(HarnessError::Config("envs_per_level must be positive".into()));
        }
        for l in &self.levels {
            if crate::maps::named_text(l).is_none() {
                return Err(HarnessError::UnknownMap(l.clone()));
            }
        }
        self.env_config(&self.levels[0]).validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.ppo.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }
}
