//! Simulator step latency (no network inference).

use std::time::{Duration, Instant};

use rand::Rng as _;

use crate::env::{EnvConfig, EnvError, ExplorationEnv};
use crate::gridworld::Action;
use crate::seeding::{derive_seed, domain, rng_from};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub steps: usize,
    pub resets: usize,
    pub median_ms: f64,
    pub mean_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub total_secs: f64,
}

impl BenchReport {
    pub fn summary(&self) -> String {
        format!(
            "steps {}  resets {}  median {:.4} ms  mean {:.4} ms  p90 {:.4} ms  p99 {:.4} ms  max {:.4} ms  total {:.2} s",
            self.steps, self.resets, self.median_ms, self.mean_ms, self.p90_ms, self.p99_ms, self.max_ms, self.total_secs
        )
    }
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[Duration], q: f64) -> f64 {
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx].as_secs_f64() * 1e3
}

/// Times `steps` uniformly random actions, resetting finished episodes
/// outside the timed region.
pub fn bench(cfg: &EnvConfig, steps: usize, seed: u64) -> Result<BenchReport, EnvError> {
    if steps == 0 {
        return Err(EnvError::Usage("bench needs at least one step".into()));
    }
    let mut env = ExplorationEnv::<f32>::new(cfg.clone())?;
    let mut rng = rng_from(derive_seed(seed, domain::BENCH, 0));
    env.reset(derive_seed(seed, domain::BENCH, 1))?;
    let mut times = Vec::with_capacity(steps);
    let mut resets = 0;
    let start = Instant::now();
    for _ in 0..steps {
        let action = Action::ALL[rng.gen_range(0..Action::COUNT)];
        let t = Instant::now();
        let r = env.step(action)?;
        times.push(t.elapsed());
        if r.done() {
            resets += 1;
            env.reset(derive_seed(seed, domain::BENCH, 1 + resets as u64))?;
        }
    }
    let total_secs = start.elapsed().as_secs_f64();
    times.sort_unstable();
    let mean_ms = times.iter().map(|d| d.as_secs_f64()).sum::<f64>() * 1e3 / steps as f64;
    Ok(BenchReport {
        steps,
        resets,
        median_ms: percentile(&times, 0.5),
        mean_ms,
        p90_ms: percentile(&times, 0.9),
        p99_ms: percentile(&times, 0.99),
        max_ms: times.last().map_or(0.0, |d| d.as_secs_f64() * 1e3),
        total_secs,
    })
}
