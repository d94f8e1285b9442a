//! Clipped-surrogate PPO with GAE over a vectorized environment pool.

mod gae;
mod rollout;
mod train;
mod update;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::CurriculumError;
use crate::env::EnvError;
use crate::nn::NetError;
use crate::vecenv::VecEnvError;

pub use gae::compute_gae;
pub use rollout::{collect_rollout, RolloutBuffer};
pub use train::{
    train, EvalConfig, EvalRecord, MemorySink, StageRecord, TrainConfig, TrainOutcome, TrainSink, TrainStatus,
    UpdateRecord,
};
pub use update::{normalize_advantages, ppo_update, UpdateStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatches: usize,
    /// Steps per slot per rollout.
    pub rollout_len: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    /// Adds a randomly rotated copy of every minibatch sample.
    pub augment: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            epochs: 4,
            minibatches: 4,
            rollout_len: 128,
            value_coef: 0.5,
            entropy_coef: 0.01,
            learning_rate: 2.5e-4,
            max_grad_norm: 0.5,
            augment: true,
        }
    }
}

impl PpoConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |m: &str| Err(PpoError::InvalidConfig(m.into()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0) {
            return bad("clip_eps must be positive");
        }
        if self.epochs == 0 || self.minibatches == 0 || self.rollout_len == 0 {
            return bad("epochs, minibatches and rollout_len must be positive");
        }
        if !(self.learning_rate >= 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("learning_rate must be non-negative and max_grad_norm positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("{what} has length {found}, expected {expected}")]
    LengthMismatch { what: &'static str, expected: usize, found: usize },
    #[error("the environment pool is empty")]
    EmptyPool,
    #[error("invalid PPO config: {0}")]
    InvalidConfig(String),
    #[error(
        "non-finite loss at epoch {epoch}, minibatch {minibatch}: policy {policy_loss}, value {value_loss}, entropy {entropy}"
    )]
    NonFiniteLoss { epoch: usize, minibatch: usize, policy_loss: f64, value_loss: f64, entropy: f64 },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    VecEnv(#[from] VecEnvError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}
