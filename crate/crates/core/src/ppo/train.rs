use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::curriculum::{should_switch, Curriculum, CurriculumMode, Evaluator, StageState, SwitchRule};
use crate::env::EnvConfig;
use crate::nn::{Adam, AdamConfig, NetShape, Network};
use crate::policy::GreedyPolicy;
use crate::scalar::Scalar;
use crate::seeding::{derive_seed, domain, rng_from};
use crate::vecenv::VecEnv;

use super::{collect_rollout, ppo_update, PpoConfig, PpoError, UpdateStats};

/// Evaluation cadence and the stage-switch / stopping thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Transitions on the current highest level between evaluations.
    pub interval: u64,
    pub episodes: usize,
    pub ema_tau: f64,
    pub switch_window: usize,
    pub switch_threshold: f64,
    /// EMA the final level must also reach before training stops.
    pub final_ema: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { interval: 5000, episodes: 3, ema_tau: 0.9, switch_window: 10, switch_threshold: 0.95, final_ema: 0.95 }
    }
}

impl EvalConfig {
    pub fn switch_rule(&self) -> SwitchRule {
        SwitchRule { window: self.switch_window, threshold: self.switch_threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: CurriculumMode,
    /// One environment config per curriculum level, easiest first.
    pub levels: Vec<EnvConfig>,
    /// Slots added per level.
    pub envs_per_level: usize,
    /// Total transitions (all slots) after which training stops.
    pub transition_budget: u64,
    pub seed: u64,
    /// Steps environment slots on the rayon pool.
    pub parallel: bool,
    pub ppo: PpoConfig,
    pub adam: AdamConfig,
    pub eval: EvalConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: CurriculumMode::Ccrl,
            levels: (1..=crate::maps::LEVEL_COUNT).map(EnvConfig::for_level).collect(),
            envs_per_level: 4,
            transition_budget: 2_000_000,
            seed: 0,
            parallel: false,
            ppo: PpoConfig::default(),
            adam: AdamConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    pub update: u64,
    pub total_transitions: u64,
    pub stage: usize,
    pub pool_size: usize,
    /// Indexed by `level - 1`.
    pub transitions_per_level: Vec<u64>,
    pub stats: UpdateStats,
    pub episodes_finished: usize,
    pub mean_episode_rate: Option<f64>,
    /// Latest `(mean rate, EMA)` per level, indexed by `level - 1`.
    pub latest_eval: Vec<Option<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub eval_index: u64,
    pub level: usize,
    pub mean_rate: f64,
    pub ema: f64,
    pub level_transitions: u64,
    pub total_transitions: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: usize,
    pub level: usize,
    pub pool_size: usize,
    /// Slot counts indexed by `level - 1`.
    pub slots_per_level: Vec<usize>,
    pub total_transitions: u64,
    pub elapsed_secs: f64,
}

/// Receives training progress as it happens.
pub trait TrainSink<T: Scalar> {
    fn update(&mut self, record: &UpdateRecord) -> std::io::Result<()>;
    fn eval(&mut self, record: &EvalRecord) -> std::io::Result<()>;
    fn stage(&mut self, record: &StageRecord) -> std::io::Result<()>;
    fn checkpoint(&mut self, name: &str, net: &Network<T>) -> std::io::Result<()>;
}

/// Keeps every record in memory; checkpoints are kept by name only.
#[derive(Debug, Clone, Default)]
pub struct MemorySink {
    pub updates: Vec<UpdateRecord>,
    pub evals: Vec<EvalRecord>,
    pub stages: Vec<StageRecord>,
    pub checkpoints: Vec<String>,
}

impl<T: Scalar> TrainSink<T> for MemorySink {
    fn update(&mut self, record: &UpdateRecord) -> std::io::Result<()> {
        self.updates.push(record.clone());
        Ok(())
    }

    fn eval(&mut self, record: &EvalRecord) -> std::io::Result<()> {
        self.evals.push(record.clone());
        Ok(())
    }

    fn stage(&mut self, record: &StageRecord) -> std::io::Result<()> {
        self.stages.push(record.clone());
        Ok(())
    }

    fn checkpoint(&mut self, name: &str, _net: &Network<T>) -> std::io::Result<()> {
        self.checkpoints.push(name.to_string());
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    /// The final level met the switch rule and the EMA target.
    Converged,
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub status: TrainStatus,
    pub net: Network<T>,
    pub stage: StageState,
    pub updates: u64,
    pub total_transitions: u64,
}

fn stage_record<T: Scalar>(stage: &StageState, pool: &VecEnv<T>, total: u64, start: Instant) -> StageRecord {
    StageRecord {
        stage: stage.current_level,
        level: stage.current_level,
        pool_size: pool.len(),
        slots_per_level: pool.slots_per_level(stage.level_count)[1..].to_vec(),
        total_transitions: total,
        elapsed_secs: start.elapsed().as_secs_f64(),
    }
}

/// Collect, update and evaluate until the last level converges or the
/// transition budget runs out.
pub fn train<T: Scalar>(cfg: &TrainConfig, sink: &mut dyn TrainSink<T>) -> Result<TrainOutcome<T>, PpoError> {
    cfg.ppo.validate()?;
    if cfg.levels.is_empty() || cfg.envs_per_level == 0 {
        return Err(PpoError::InvalidConfig("need at least one level and one environment per level".into()));
    }
    let shape = NetShape::for_encoder(&cfg.levels[0].encoder, &cfg.levels[0].lidar);
    for l in &cfg.levels {
        l.validate()?;
        if NetShape::for_encoder(&l.encoder, &l.lidar) != shape {
            return Err(PpoError::InvalidConfig("all levels must share encoder and lidar dimensions".into()));
        }
    }
    let start = Instant::now();
    let k = cfg.levels.len();
    let curriculum = Curriculum::new(cfg.mode, cfg.envs_per_level, cfg.levels.clone())?;
    let mut stage = StageState::new(k, cfg.eval.ema_tau);
    if cfg.mode == CurriculumMode::Flat {
        stage.current_level = k;
    }
    let mut pool = VecEnv::new(cfg.seed).with_parallel(cfg.parallel);
    curriculum.initial_pool(&mut pool)?;

    let mut net = Network::<T>::init(shape, &mut rng_from(derive_seed(cfg.seed, domain::INIT, 0)));
    let mut adam = Adam::new(net.params().len(), cfg.adam);
    sink.checkpoint("initial", &net)?;
    sink.stage(&stage_record(&stage, &pool, 0, start))?;

    let mut policy_rng = rng_from(derive_seed(cfg.seed, domain::POLICY, 0));
    let mut shuffle_rng = rng_from(derive_seed(cfg.seed, domain::SHUFFLE, 0));
    let mut evaluator = Evaluator::new(cfg.seed, cfg.eval.episodes);
    let rule = cfg.eval.switch_rule();
    let mut current = pool.observations()?;
    let mut total = 0u64;
    let mut updates = 0u64;
    let mut since_eval = 0u64;
    let mut latest_eval: Vec<Option<(f64, f64)>> = vec![None; k];
    let mut status = TrainStatus::BudgetExhausted;

    while total < cfg.transition_budget {
        let buffer = collect_rollout(&mut pool, &net, &mut current, &mut policy_rng, cfg.ppo.rollout_len)?;
        let counts = buffer.transitions_per_level(k);
        for (level, &c) in counts.iter().enumerate().skip(1) {
            stage.add_transitions(level, c);
        }
        total += buffer.len() as u64;
        since_eval += counts[stage.current_level];

        let (adv, ret) = buffer.advantages(cfg.ppo.gamma, cfg.ppo.gae_lambda)?;
        let stats = ppo_update(&mut net, &mut adam, &buffer, &adv, &ret, &cfg.ppo, &mut shuffle_rng)?;
        updates += 1;

        let mut finished = false;
        let mut switched = false;
        if since_eval >= cfg.eval.interval {
            since_eval -= cfg.eval.interval;
            let levels = curriculum.experienced_levels(stage.current_level);
            let index = evaluator.evaluations();
            let results = evaluator.evaluate_policy(&mut GreedyPolicy(&net), &curriculum, &levels, &mut stage)?;
            for (level, mean_rate) in results {
                let ema = stage.ema(level).unwrap_or(mean_rate);
                latest_eval[level - 1] = Some((mean_rate, ema));
                sink.eval(&EvalRecord {
                    eval_index: index,
                    level,
                    mean_rate,
                    ema,
                    level_transitions: stage.transitions_per_level[level - 1],
                    total_transitions: total,
                })?;
            }
            if should_switch(&stage, &rule) {
                if stage.is_final() {
                    finished = stage.ema(stage.current_level).is_some_and(|e| e >= cfg.eval.final_ema);
                } else {
                    switched = true;
                }
            }
        }

        let mean_episode_rate = (!buffer.finished.is_empty())
            .then(|| buffer.finished.iter().map(|f| f.1).sum::<f64>() / buffer.finished.len() as f64);
        sink.update(&UpdateRecord {
            update: updates,
            total_transitions: total,
            stage: stage.current_level,
            pool_size: pool.len(),
            transitions_per_level: stage.transitions_per_level.clone(),
            stats,
            episodes_finished: buffer.finished.len(),
            mean_episode_rate,
            latest_eval: latest_eval.clone(),
        })?;

        if switched {
            sink.checkpoint(&format!("stage_{}", stage.current_level), &net)?;
            let next = stage.current_level + 1;
            curriculum.on_switch(&mut pool, next)?;
            stage.current_level = next;
            since_eval = 0;
            current = pool.observations()?;
            sink.stage(&stage_record(&stage, &pool, total, start))?;
            log::info!("stage {next}: pool of {} slots after {total} transitions", pool.len());
        }
        if finished {
            status = TrainStatus::Converged;
            break;
        }
    }
    if updates > 0 {
        sink.checkpoint("final", &net)?;
    }
    Ok(TrainOutcome { status, net, stage, updates, total_transitions: total })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(mode: CurriculumMode, levels: usize, budget: u64) -> TrainConfig {
        TrainConfig {
            mode,
            levels: (1..=levels).map(|l| EnvConfig { max_steps: 40, ..EnvConfig::for_level(l) }).collect(),
            transition_budget: budget,
            ppo: PpoConfig { rollout_len: 16, epochs: 1, minibatches: 2, ..Default::default() },
            eval: EvalConfig {
                interval: 64,
                episodes: 1,
                switch_window: 1,
                switch_threshold: 0.0,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn zero_budget_writes_initial_checkpoint_only() {
        let mut sink = MemorySink::default();
        let out = train::<f32>(&tiny(CurriculumMode::Ccrl, 2, 0), &mut sink).unwrap();
        assert_eq!(out.updates, 0);
        assert_eq!(sink.checkpoints, vec!["initial"]);
        assert_eq!(sink.stages.len(), 1);
    }

    #[test]
    fn ccrl_grows_and_cl_replaces() {
        let mut sink = MemorySink::default();
        train::<f32>(&tiny(CurriculumMode::Ccrl, 3, 1024), &mut sink).unwrap();
        let sizes: Vec<usize> = sink.stages.iter().map(|s| s.pool_size).collect();
        assert_eq!(sizes, vec![4, 8, 12]);
        assert_eq!(sink.stages[2].slots_per_level, vec![4, 4, 4]);

        let mut sink = MemorySink::default();
        train::<f32>(&tiny(CurriculumMode::Cl, 3, 1024), &mut sink).unwrap();
        let sizes: Vec<usize> = sink.stages.iter().map(|s| s.pool_size).collect();
        assert_eq!(sizes, vec![4, 4, 4]);
        assert_eq!(sink.stages[1].slots_per_level, vec![0, 4, 0]);
    }
}
