//! Action-selection interface and episode runner shared by evaluation,
//! benchmarking and the CLI.

use rand::Rng as _;

use crate::encoder::Observation;
use crate::env::{EnvError, ExplorationEnv};
use crate::gridworld::Action;
use crate::nn::{Categorical, Network};
use crate::scalar::Scalar;
use crate::seeding::Rng;

/// Exploration rate at which an episode counts as explored for the
/// exploration-steps metric.
pub const EXPLORED_RATE: f64 = 0.95;

/// Chooses one action per environment. Implementations may look at the
/// environment itself (scripted oracles do; learned policies only use `obs`).
pub trait Policy<T: Scalar> {
    fn act(&mut self, envs: &[&ExplorationEnv<T>], obs: &[&Observation<T>]) -> Vec<Action>;
}

/// Uniformly random actions.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: Rng,
}

impl RandomPolicy {
    pub fn new(rng: Rng) -> Self {
        Self { rng }
    }
}

impl<T: Scalar> Policy<T> for RandomPolicy {
    fn act(&mut self, envs: &[&ExplorationEnv<T>], _obs: &[&Observation<T>]) -> Vec<Action> {
        envs.iter().map(|_| Action::ALL[self.rng.gen_range(0..Action::COUNT)]).collect()
    }
}

/// Picks the most likely action of a network.
#[derive(Debug, Clone, Copy)]
pub struct GreedyPolicy<'a, T>(pub &'a Network<T>);

impl<T: Scalar> Policy<T> for GreedyPolicy<'_, T> {
    fn act(&mut self, _envs: &[&ExplorationEnv<T>], obs: &[&Observation<T>]) -> Vec<Action> {
        let out = self.0.forward(obs).expect("observation shape matches the network");
        (0..out.len()).map(|i| Action::ALL[Categorical::new(out.logits_of(i)).mode()]).collect()
    }
}

/// Samples actions from a network's softmax policy.
#[derive(Debug, Clone)]
pub struct SampledPolicy<'a, T> {
    pub net: &'a Network<T>,
    pub rng: Rng,
}

impl<T: Scalar> Policy<T> for SampledPolicy<'_, T> {
    fn act(&mut self, _envs: &[&ExplorationEnv<T>], obs: &[&Observation<T>]) -> Vec<Action> {
        let out = self.net.forward(obs).expect("observation shape matches the network");
        (0..out.len()).map(|i| Action::ALL[Categorical::new(out.logits_of(i)).sample(&mut self.rng)]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOutcome {
    pub final_rate: f64,
    pub steps: usize,
    /// First step at which the exploration rate reached [`EXPLORED_RATE`].
    pub exploration_steps: Option<usize>,
    pub success: bool,
    pub collided: bool,
}

/// Runs one episode in each environment (already reset) in lockstep until
/// all have finished.
pub fn run_episodes<T: Scalar, P: Policy<T> + ?Sized>(
    policy: &mut P,
    envs: &mut [ExplorationEnv<T>],
) -> Result<Vec<EpisodeOutcome>, EnvError> {
    let mut obs: Vec<Observation<T>> = envs.iter().map(|e| e.observe()).collect::<Result<_, _>>()?;
    let mut outcomes: Vec<Option<EpisodeOutcome>> = vec![None; envs.len()];
    let mut reached: Vec<Option<usize>> =
        envs.iter().map(|e| (e.exploration_rate() >= EXPLORED_RATE).then_some(0)).collect();
    loop {
        let live: Vec<usize> = (0..envs.len()).filter(|&i| outcomes[i].is_none()).collect();
        if live.is_empty() {
            break;
        }
        let actions = {
            let env_refs: Vec<&ExplorationEnv<T>> = live.iter().map(|&i| &envs[i]).collect();
            let obs_refs: Vec<&Observation<T>> = live.iter().map(|&i| &obs[i]).collect();
            policy.act(&env_refs, &obs_refs)
        };
        for (&i, action) in live.iter().zip(actions) {
            let r = envs[i].step(action)?;
            if reached[i].is_none() && r.info.exploration_rate >= EXPLORED_RATE {
                reached[i] = Some(envs[i].steps());
            }
            if r.done() {
                outcomes[i] = Some(EpisodeOutcome {
                    final_rate: r.info.exploration_rate,
                    steps: envs[i].steps(),
                    exploration_steps: reached[i],
                    success: r.info.success,
                    collided: r.info.collided,
                });
            }
            obs[i] = r.obs;
        }
    }
    Ok(outcomes.into_iter().map(|o| o.expect("every episode finished")).collect())
}
