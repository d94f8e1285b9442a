//! Stage scheduling: cumulative curriculum, classic curriculum and flat
//! training, the evaluation EMA and the stage-switch rule.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvConfig, EnvError, ExplorationEnv};
use crate::gridworld::GroundTruthMap;
use crate::policy::{run_episodes, Policy};
use crate::scalar::Scalar;
use crate::seeding::{derive_seed, domain};
use crate::vecenv::{VecEnv, VecEnvError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurriculumMode {
    /// New levels are added to the pool; earlier levels keep training.
    Ccrl,
    /// New levels replace the pool.
    Cl,
    /// Every level is in the pool from the start.
    Flat,
}

impl CurriculumMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CurriculumMode::Ccrl => "ccrl",
            CurriculumMode::Cl => "cl",
            CurriculumMode::Flat => "flat",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ccrl" => Some(CurriculumMode::Ccrl),
            "cl" => Some(CurriculumMode::Cl),
            "flat" => Some(CurriculumMode::Flat),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("level {level} out of range 1..={max}")]
    LevelOutOfRange { level: usize, max: usize },
    #[error("flat training never switches stages")]
    FlatSwitch,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    VecEnv(#[from] VecEnvError),
}

/// Exponential moving average seeded with its first sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmaTracker {
    pub tau: f64,
    pub value: f64,
    pub initialized: bool,
}

impl Default for EmaTracker {
    fn default() -> Self {
        Self::new(0.9)
    }
}

impl EmaTracker {
    pub fn new(tau: f64) -> Self {
        Self { tau, value: 0.0, initialized: false }
    }

    pub fn update(&mut self, sample: f64) -> f64 {
        *self = ema_update(*self, sample);
        self.value
    }
}

pub fn ema_update(tracker: EmaTracker, sample: f64) -> EmaTracker {
    let value = if tracker.initialized { tracker.tau * tracker.value + (1.0 - tracker.tau) * sample } else { sample };
    EmaTracker { value, initialized: true, ..tracker }
}

/// Switch when the mean of the last `window` evaluations strictly exceeds
/// `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchRule {
    pub window: usize,
    pub threshold: f64,
}

impl Default for SwitchRule {
    fn default() -> Self {
        Self { window: 10, threshold: 0.95 }
    }
}

/// Progress through the curriculum. Levels are 1-based positions in the
/// ladder; vectors are indexed by `level - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageState {
    pub current_level: usize,
    pub level_count: usize,
    pub eval_history: Vec<Vec<f64>>,
    pub emas: Vec<EmaTracker>,
    pub transitions_per_level: Vec<u64>,
}

impl StageState {
    pub fn new(level_count: usize, ema_tau: f64) -> Self {
        Self {
            current_level: 1,
            level_count,
            eval_history: vec![Vec::new(); level_count],
            emas: vec![EmaTracker::new(ema_tau); level_count],
            transitions_per_level: vec![0; level_count],
        }
    }

    /// Appends an evaluation result and returns the updated EMA.
    pub fn record_eval(&mut self, level: usize, mean_rate: f64) -> f64 {
        self.eval_history[level - 1].push(mean_rate);
        self.emas[level - 1].update(mean_rate)
    }

    pub fn history(&self, level: usize) -> &[f64] {
        &self.eval_history[level - 1]
    }

    pub fn ema(&self, level: usize) -> Option<f64> {
        let e = self.emas[level - 1];
        e.initialized.then_some(e.value)
    }

    pub fn add_transitions(&mut self, level: usize, n: u64) {
        self.transitions_per_level[level - 1] += n;
    }

    pub fn is_final(&self) -> bool {
        self.current_level == self.level_count
    }
}

/// Mean of the last `window` evaluations on `level`, if that many exist.
pub fn recent_mean(stage: &StageState, level: usize, window: usize) -> Option<f64> {
    let h = stage.history(level);
    (window > 0 && h.len() >= window).then(|| h[h.len() - window..].iter().sum::<f64>() / window as f64)
}

pub fn should_switch(stage: &StageState, rule: &SwitchRule) -> bool {
    recent_mean(stage, stage.current_level, rule.window).is_some_and(|m| m > rule.threshold)
}

/// Level ladder plus the pool-composition policy.
#[derive(Debug, Clone)]
pub struct Curriculum {
    pub mode: CurriculumMode,
    pub per_level: usize,
    levels: Vec<(EnvConfig, Arc<GroundTruthMap>)>,
}

impl Curriculum {
    /// `levels[i]` configures curriculum level `i + 1`.
    pub fn new(mode: CurriculumMode, per_level: usize, levels: Vec<EnvConfig>) -> Result<Self, EnvError> {
        let levels = levels
            .into_iter()
            .map(|cfg| {
                let map = cfg.load_base_map()?.relidar(cfg.lidar);
                Ok((cfg, Arc::new(map)))
            })
            .collect::<Result<_, EnvError>>()?;
        Ok(Self { mode, per_level, levels })
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn level_config(&self, level: usize) -> &EnvConfig {
        &self.levels[level - 1].0
    }

    fn check_level(&self, level: usize) -> Result<(), CurriculumError> {
        if level == 0 || level > self.levels.len() {
            return Err(CurriculumError::LevelOutOfRange { level, max: self.levels.len() });
        }
        Ok(())
    }

    /// Fresh environments for `level`; the caller decides their seeds.
    pub fn make_envs<T: Scalar>(&self, level: usize, count: usize) -> Result<Vec<ExplorationEnv<T>>, CurriculumError> {
        self.check_level(level)?;
        let (cfg, map) = &self.levels[level - 1];
        (0..count)
            .map(|_| ExplorationEnv::with_map(Arc::clone(map), cfg.clone()).map_err(CurriculumError::from))
            .collect()
    }

    /// Populates an empty pool for stage 1.
    pub fn initial_pool<T: Scalar>(&self, pool: &mut VecEnv<T>) -> Result<(), CurriculumError> {
        let levels: Vec<usize> = match self.mode {
            CurriculumMode::Flat => (1..=self.levels.len()).collect(),
            CurriculumMode::Ccrl | CurriculumMode::Cl => vec![1],
        };
        for level in levels {
            pool.add_envs(self.make_envs(level, self.per_level)?, level)?;
        }
        Ok(())
    }

    /// Applies a stage switch to the pool.
    pub fn on_switch<T: Scalar>(&self, pool: &mut VecEnv<T>, next_level: usize) -> Result<(), CurriculumError> {
        self.check_level(next_level)?;
        let envs = self.make_envs(next_level, self.per_level)?;
        match self.mode {
            CurriculumMode::Ccrl => pool.add_envs(envs, next_level)?,
            CurriculumMode::Cl => pool.replace_all(envs, next_level)?,
            CurriculumMode::Flat => return Err(CurriculumError::FlatSwitch),
        }
        Ok(())
    }

    /// Levels the agent has trained on so far at `stage_level`.
    pub fn experienced_levels(&self, stage_level: usize) -> Vec<usize> {
        match self.mode {
            CurriculumMode::Flat => (1..=self.levels.len()).collect(),
            _ => (1..=stage_level).collect(),
        }
    }
}

/// Runs greedy evaluation episodes on dedicated environments whose seeds are
/// disjoint from every training stream.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub episodes_per_level: usize,
    master_seed: u64,
    evaluations: u64,
}

impl Evaluator {
    pub fn new(master_seed: u64, episodes_per_level: usize) -> Self {
        Self { episodes_per_level, master_seed, evaluations: 0 }
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    /// Mean final exploration rate per level (in `levels` order); results
    /// are appended to `stage`'s history and EMA.
    pub fn evaluate_policy<T: Scalar, P: Policy<T> + ?Sized>(
        &mut self,
        policy: &mut P,
        curriculum: &Curriculum,
        levels: &[usize],
        stage: &mut StageState,
    ) -> Result<Vec<(usize, f64)>, CurriculumError> {
        let round = self.evaluations;
        self.evaluations += 1;
        let mut envs = Vec::new();
        for &level in levels {
            for (e, mut env) in curriculum.make_envs::<T>(level, self.episodes_per_level)?.into_iter().enumerate() {
                let seed =
                    derive_seed(self.master_seed, domain::EVAL, (round << 24) | ((level as u64) << 12) | e as u64);
                env.reset(seed)?;
                envs.push(env);
            }
        }
        let outcomes = run_episodes(policy, &mut envs)?;
        let mut out = Vec::with_capacity(levels.len());
        for (k, &level) in levels.iter().enumerate() {
            let chunk = &outcomes[k * self.episodes_per_level..(k + 1) * self.episodes_per_level];
            let mean = chunk.iter().map(|o| o.final_rate).sum::<f64>() / chunk.len().max(1) as f64;
            stage.record_eval(level, mean);
            out.push((level, mean));
        }
        Ok(out)
    }
}
