//! Batched stepping over independent environment slots.

use rand::RngCore;
use rayon::prelude::*;
use thiserror::Error;

use crate::encoder::Observation;
use crate::env::{EnvError, ExplorationEnv, StepResult};
use crate::gridworld::Action;
use crate::scalar::Scalar;
use crate::seeding::{derive_seed, domain, rng_from, Rng};

#[derive(Debug, Error)]
pub enum VecEnvError {
    #[error("expected {expected} {what}, got {found}")]
    CountMismatch { what: &'static str, expected: usize, found: usize },
    #[error("slot {slot}: {source}")]
    Slot {
        slot: usize,
        #[source]
        source: EnvError,
    },
}

#[derive(Debug, Clone)]
struct Slot<T> {
    env: ExplorationEnv<T>,
    level: usize,
    /// Supplies the seed of every auto-reset of this slot.
    seeds: Rng,
}

/// An ordered pool of environments stepped in lockstep.
#[derive(Debug, Clone)]
pub struct VecEnv<T = f64> {
    slots: Vec<Slot<T>>,
    master_seed: u64,
    /// Streams handed out so far; never reused even when slots are replaced.
    next_stream: u64,
    parallel: bool,
}

impl<T: Scalar> VecEnv<T> {
    pub fn new(master_seed: u64) -> Self {
        Self { slots: Vec::new(), master_seed, next_stream: 0, parallel: false }
    }

    /// Steps slots on the rayon pool. Results are identical either way.
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn level_of(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.level).collect()
    }

    pub fn env(&self, slot: usize) -> &ExplorationEnv<T> {
        &self.slots[slot].env
    }

    pub fn envs(&self) -> impl Iterator<Item = &ExplorationEnv<T>> {
        self.slots.iter().map(|s| &s.env)
    }

    /// Per-level slot counts, indexed by level (index 0 unused).
    pub fn slots_per_level(&self, max_level: usize) -> Vec<usize> {
        let mut counts = vec![0; max_level + 1];
        for s in &self.slots {
            if s.level <= max_level {
                counts[s.level] += 1;
            }
        }
        counts
    }

    pub fn observations(&self) -> Result<Vec<Observation<T>>, VecEnvError> {
        self.slots
            .iter()
            .enumerate()
            .map(|(i, s)| s.env.observe().map_err(|source| VecEnvError::Slot { slot: i, source }))
            .collect()
    }

    pub fn reset_all(&mut self, seeds: &[u64]) -> Result<Vec<Observation<T>>, VecEnvError> {
        if seeds.len() != self.slots.len() {
            return Err(VecEnvError::CountMismatch { what: "seeds", expected: self.slots.len(), found: seeds.len() });
        }
        let run = |(i, (slot, &seed)): (usize, (&mut Slot<T>, &u64))| {
            slot.env.reset(seed).map_err(|source| VecEnvError::Slot { slot: i, source })
        };
        if self.parallel {
            self.slots.par_iter_mut().zip(seeds.par_iter()).enumerate().map(run).collect()
        } else {
            self.slots.iter_mut().zip(seeds.iter()).enumerate().map(run).collect()
        }
    }

    /// Steps every slot; finished slots auto-reset and report the pre-reset
    /// observation in `final_obs`.
    pub fn step_batch(&mut self, actions: &[Action]) -> Result<Vec<StepResult<T>>, VecEnvError> {
        if actions.len() != self.slots.len() {
            return Err(VecEnvError::CountMismatch {
                what: "actions",
                expected: self.slots.len(),
                found: actions.len(),
            });
        }
        let run = |(i, (slot, &action)): (usize, (&mut Slot<T>, &Action))| {
            step_slot(slot, action).map_err(|source| VecEnvError::Slot { slot: i, source })
        };
        if self.parallel {
            self.slots.par_iter_mut().zip(actions.par_iter()).enumerate().map(run).collect()
        } else {
            self.slots.iter_mut().zip(actions.iter()).enumerate().map(run).collect()
        }
    }

    /// Appends slots tagged with `level`; each is reset from its own stream.
    /// Existing slots keep their in-progress episodes.
    pub fn add_envs(&mut self, new_envs: Vec<ExplorationEnv<T>>, level: usize) -> Result<(), VecEnvError> {
        for mut env in new_envs {
            let mut seeds = rng_from(derive_seed(self.master_seed, domain::SLOT, self.next_stream));
            self.next_stream += 1;
            env.reset(seeds.next_u64()).map_err(|source| VecEnvError::Slot { slot: self.slots.len(), source })?;
            self.slots.push(Slot { env, level, seeds });
        }
        Ok(())
    }

    /// Drops every slot and installs `new_envs` (fresh streams).
    pub fn replace_all(&mut self, new_envs: Vec<ExplorationEnv<T>>, level: usize) -> Result<(), VecEnvError> {
        self.slots.clear();
        self.add_envs(new_envs, level)
    }
}

fn step_slot<T: Scalar>(slot: &mut Slot<T>, action: Action) -> Result<StepResult<T>, EnvError> {
    let mut result = slot.env.step(action)?;
    if result.done() {
        let fresh = slot.env.reset(slot.seeds.next_u64())?;
        result.final_obs = Some(std::mem::replace(&mut result.obs, fresh));
    }
    Ok(result)
}
