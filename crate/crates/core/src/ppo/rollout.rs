use crate::encoder::Observation;
use crate::gridworld::Action;
use crate::nn::{Categorical, Network};
use crate::scalar::Scalar;
use crate::seeding::Rng;
use crate::vecenv::VecEnv;

use super::{compute_gae, PpoError};

/// Transitions of one rollout, stored time-major: row `t * slots + s`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer<T> {
    pub slots: usize,
    pub steps: usize,
    pub obs: Vec<Observation<T>>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<T>,
    pub rewards: Vec<T>,
    pub values: Vec<T>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    pub levels: Vec<usize>,
    /// Value of the successor state where it is needed for bootstrapping
    /// (truncations and the final step); zero elsewhere.
    pub bootstrap: Vec<T>,
    /// `(level, final exploration rate)` of every episode that ended.
    pub finished: Vec<(usize, f64)>,
}

impl<T: Scalar> RolloutBuffer<T> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Transitions per level tag, indexed by level (index 0 unused).
    pub fn transitions_per_level(&self, max_level: usize) -> Vec<u64> {
        let mut counts = vec![0; max_level + 1];
        for &l in &self.levels {
            if l <= max_level {
                counts[l] += 1;
            }
        }
        counts
    }

    /// Advantages and returns in buffer order.
    pub fn advantages(&self, gamma: f64, lambda: f64) -> Result<(Vec<T>, Vec<T>), PpoError> {
        let n = self.len();
        let mut adv = vec![T::zero(); n];
        let mut ret = vec![T::zero(); n];
        for s in 0..self.slots {
            let rows: Vec<usize> = (0..self.steps).map(|t| t * self.slots + s).collect();
            let pick = |v: &[T]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let pick_b = |v: &[bool]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let (a, r) = compute_gae(
                &pick(&self.rewards),
                &pick(&self.values),
                &pick_b(&self.terminated),
                &pick_b(&self.truncated),
                &pick(&self.bootstrap),
                T::of(gamma),
                T::of(lambda),
            )?;
            for (k, &i) in rows.iter().enumerate() {
                adv[i] = a[k];
                ret[i] = r[k];
            }
        }
        Ok((adv, ret))
    }
}

/// Runs `steps` synchronized batch steps with actions sampled from `net`.
/// `current` holds each slot's latest observation and is advanced in place.
pub fn collect_rollout<T: Scalar>(
    pool: &mut VecEnv<T>,
    net: &Network<T>,
    current: &mut [Observation<T>],
    rng: &mut Rng,
    steps: usize,
) -> Result<RolloutBuffer<T>, PpoError> {
    let slots = pool.len();
    if slots == 0 {
        return Err(PpoError::EmptyPool);
    }
    if current.len() != slots {
        return Err(PpoError::LengthMismatch { what: "current observations", expected: slots, found: current.len() });
    }
    let levels = pool.level_of();
    let n = slots * steps;
    let mut buf = RolloutBuffer {
        slots,
        steps,
        obs: Vec::with_capacity(n),
        actions: Vec::with_capacity(n),
        log_probs: Vec::with_capacity(n),
        rewards: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
        terminated: Vec::with_capacity(n),
        truncated: Vec::with_capacity(n),
        levels: Vec::with_capacity(n),
        bootstrap: vec![T::zero(); n],
        finished: Vec::new(),
    };
    for t in 0..steps {
        let out = net.forward(&current.iter().collect::<Vec<_>>())?;
        let mut actions = Vec::with_capacity(slots);
        for s in 0..slots {
            let dist = Categorical::new(out.logits_of(s));
            let a = dist.sample(rng);
            actions.push(Action::ALL[a]);
            buf.actions.push(a);
            buf.log_probs.push(dist.log_prob(a));
            buf.values.push(out.values[s]);
        }
        let results = pool.step_batch(&actions)?;
        let truncated_rows: Vec<usize> = (0..slots).filter(|&s| results[s].truncated).collect();
        if !truncated_rows.is_empty() {
            let finals: Vec<&Observation<T>> =
                truncated_rows.iter().map(|&s| results[s].final_obs.as_ref().unwrap_or(&results[s].obs)).collect();
            let v = net.forward(&finals)?.values;
            for (&s, val) in truncated_rows.iter().zip(v) {
                buf.bootstrap[t * slots + s] = val;
            }
        }
        for (s, r) in results.into_iter().enumerate() {
            if r.done() {
                buf.finished.push((levels[s], r.info.exploration_rate));
            }
            buf.rewards.push(T::of(r.reward));
            buf.terminated.push(r.terminated);
            buf.truncated.push(r.truncated);
            buf.levels.push(levels[s]);
            buf.obs.push(std::mem::replace(&mut current[s], r.obs));
        }
    }
    let last = (steps - 1) * slots;
    let open: Vec<usize> = (0..slots).filter(|&s| !buf.terminated[last + s] && !buf.truncated[last + s]).collect();
    if !open.is_empty() {
        let v = net.forward(&open.iter().map(|&s| &current[s]).collect::<Vec<_>>())?.values;
        for (&s, val) in open.iter().zip(v) {
            buf.bootstrap[last + s] = val;
        }
    }
    Ok(buf)
}
