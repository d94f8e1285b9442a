//! The exploration MDP: episode lifecycle, reward and termination.

use std::marker::PhantomData;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{build_observation, EncodeError, EncoderConfig, Observation};
use crate::gridworld::{
    apply_action, load_map, place_obstacles_with, random_free_pose, Action, GroundTruthMap, MapError, ObstacleSpec,
    Pose, DEFAULT_PLACEMENT_ATTEMPTS,
};
use crate::maps;
use crate::scalar::Scalar;
use crate::seeding::rng_from;
use crate::sensor::{integrate_scan, scan_into, BeliefMap, LidarConfig, LidarScan};

/// Per-step penalty when nothing new is revealed.
pub const IDLE_PENALTY: f64 = -0.005;
pub const EXPLORATION_SCALE: f64 = 10.0;
pub const SUCCESS_BONUS: f64 = 1.0;
pub const COLLISION_PENALTY: f64 = -1.0;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("unknown map `{0}`")]
    UnknownMap(String),
    #[error("invalid env config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Curriculum level (`"1"`..`"5"`, `"level2"`) or built-in map name.
    pub map_id: String,
    pub obstacle_count: usize,
    pub obstacle_size: usize,
    pub max_steps: usize,
    pub success_threshold: f64,
    pub encoder: EncoderConfig,
    pub lidar: LidarConfig,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            map_id: "1".into(),
            obstacle_count: 4,
            obstacle_size: 1,
            max_steps: 1000,
            success_threshold: 0.99,
            encoder: EncoderConfig::default(),
            lidar: LidarConfig::default(),
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn for_level(level: usize) -> Self {
        Self { map_id: level.to_string(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.success_threshold > 0.0 && self.success_threshold <= 1.0) {
            return Err(EnvError::InvalidConfig("success_threshold must lie in (0, 1]".into()));
        }
        if self.max_steps == 0 {
            return Err(EnvError::InvalidConfig("max_steps must be positive".into()));
        }
        self.lidar.validate().map_err(EnvError::InvalidConfig)?;
        self.encoder.validate()?;
        Ok(())
    }

    pub fn load_base_map(&self) -> Result<GroundTruthMap, EnvError> {
        let text = maps::named_text(&self.map_id).ok_or_else(|| EnvError::UnknownMap(self.map_id.clone()))?;
        Ok(load_map(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    pub exploration_rate: f64,
    pub collided: bool,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<T> {
    pub obs: Observation<T>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
    /// Observation of the finished episode when a vectorized pool has
    /// already auto-reset the slot (`obs` is then the fresh episode's).
    pub final_obs: Option<Observation<T>>,
}

impl<T> StepResult<T> {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// One row of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub action: usize,
    pub reward: f64,
    pub rho: f64,
    pub row: usize,
    pub col: usize,
    pub heading: u32,
    pub terminated: bool,
    pub truncated: bool,
}

/// `known / observable`.
pub fn exploration_rate(belief: &BeliefMap, map: &GroundTruthMap) -> f64 {
    assert!(map.observable_count() > 0, "map has no observable cells");
    belief.known_count() as f64 / map.observable_count() as f64
}

/// Sum of exploration, success and collision terms.
pub fn compute_reward(rho_prev: f64, rho_now: f64, collided: bool, success: bool) -> f64 {
    let explore = if rho_now > rho_prev {
        ((rho_now * rho_now - rho_prev * rho_prev) * EXPLORATION_SCALE).clamp(0.0, 1.0)
    } else {
        IDLE_PENALTY
    };
    let bonus = if success { SUCCESS_BONUS } else { 0.0 };
    let crash = if collided { COLLISION_PENALTY } else { 0.0 };
    explore + bonus + crash
}

/// A single exploration episode runner.
#[derive(Debug, Clone)]
pub struct ExplorationEnv<T = f64> {
    cfg: EnvConfig,
    base: Arc<GroundTruthMap>,
    map: GroundTruthMap,
    belief: BeliefMap,
    pose: Pose,
    rho: f64,
    steps: usize,
    active: bool,
    scan: LidarScan,
    trace: Option<Vec<TraceRow>>,
    _scalar: PhantomData<T>,
}

impl<T: Scalar> ExplorationEnv<T> {
    /// Loads the configured built-in map and resets with `cfg.seed`.
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        let base = cfg.load_base_map()?;
        Self::with_map(Arc::new(base), cfg)
    }

    /// Uses a caller-provided map and resets with `cfg.seed`.
    pub fn with_map(base: Arc<GroundTruthMap>, cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let base = if base.lidar() == &cfg.lidar { base } else { Arc::new(base.relidar(cfg.lidar)) };
        let seed = cfg.seed;
        let mut env = Self {
            map: (*base).clone(),
            belief: BeliefMap::for_map(&base),
            pose: Pose::new(0, 0, crate::gridworld::Heading::North),
            rho: 0.0,
            steps: 0,
            active: false,
            scan: LidarScan { ranges: Vec::new(), hit_mask: Vec::new(), beams: Vec::new() },
            trace: None,
            cfg,
            base,
            _scalar: PhantomData,
        };
        env.reset(seed)?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    /// Ground truth of the current episode (base map plus obstacles).
    pub fn map(&self) -> &GroundTruthMap {
        &self.map
    }

    pub fn base_map(&self) -> &Arc<GroundTruthMap> {
        &self.base
    }

    pub fn belief(&self) -> &BeliefMap {
        &self.belief
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn exploration_rate(&self) -> f64 {
        self.rho
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn last_scan(&self) -> &LidarScan {
        &self.scan
    }

    /// Starts recording a trace from the next step on.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> Option<&[TraceRow]> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Option<Vec<TraceRow>> {
        self.trace.as_mut().map(std::mem::take)
    }

    pub fn reset(&mut self, seed: u64) -> Result<Observation<T>, EnvError> {
        let mut rng = rng_from(seed);
        let pose = random_free_pose(&self.base, &mut rng)?;
        let spec = ObstacleSpec {
            count: self.cfg.obstacle_count,
            size: self.cfg.obstacle_size,
            max_attempts: DEFAULT_PLACEMENT_ATTEMPTS,
        };
        self.map = place_obstacles_with(&self.base, &spec, pose, &mut rng)?;
        self.belief = BeliefMap::for_map(&self.map);
        self.pose = pose;
        self.steps = 0;
        self.sense();
        self.rho = exploration_rate(&self.belief, &self.map);
        self.active = true;
        if let Some(t) = self.trace.as_mut() {
            t.clear();
        }
        self.observe()
    }

    fn sense(&mut self) {
        scan_into(&self.map, self.pose, &self.cfg.lidar, &mut self.scan);
        integrate_scan(&mut self.belief, &self.map, self.pose, &self.scan);
    }

    pub fn observe(&self) -> Result<Observation<T>, EnvError> {
        Ok(build_observation(&self.belief, self.pose, &self.scan, &self.cfg.encoder, &self.cfg.lidar)?)
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult<T>, EnvError> {
        if !self.active {
            return Err(EnvError::Usage("step called on a finished episode; call reset first".into()));
        }
        let outcome = apply_action(&self.map, self.pose, action);
        let rho_prev = self.rho;
        if !outcome.collided {
            self.pose = outcome.new_pose;
            // Beam directions rotate with the heading, so turns rescan too.
            self.sense();
            self.rho = exploration_rate(&self.belief, &self.map);
        }
        self.steps += 1;
        let success = !outcome.collided && self.rho >= self.cfg.success_threshold;
        let reward = compute_reward(rho_prev, self.rho, outcome.collided, success);
        let terminated = outcome.collided || success;
        let truncated = !terminated && self.steps >= self.cfg.max_steps;
        self.active = !(terminated || truncated);
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRow {
                step: self.steps,
                action: action.code(),
                reward,
                rho: self.rho,
                row: self.pose.row,
                col: self.pose.col,
                heading: self.pose.heading.degrees(),
                terminated,
                truncated,
            });
        }
        Ok(StepResult {
            obs: self.observe()?,
            reward,
            terminated,
            truncated,
            info: StepInfo { exploration_rate: self.rho, collided: outcome.collided, success },
            final_obs: None,
        })
    }
}

/// Writes trace rows as CSV with a header line.
pub fn write_trace<W: std::io::Write>(rows: &[TraceRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: std::io::Read>(input: R) -> csv::Result<Vec<TraceRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::Heading;

    fn env(seed: u64) -> ExplorationEnv<f64> {
        ExplorationEnv::new(EnvConfig { seed, ..EnvConfig::for_level(1) }).unwrap()
    }

    #[test]
    fn reward_examples_are_exact() {
        assert_eq!(compute_reward(0.4, 0.4, false, false), -0.005);
        assert!((compute_reward(0.30, 0.32, false, false) - 0.124).abs() <= 1e-12);
        assert_eq!(compute_reward(0.5, 0.6, false, false), 1.0);
        assert_eq!(compute_reward(0.4, 0.4, true, false), -1.005);
        let r = compute_reward(0.98, 0.995, false, true);
        let explore = (0.995f64 * 0.995 - 0.98 * 0.98) * 10.0;
        assert!((r - (explore + 1.0)).abs() <= 1e-12);
    }

    #[test]
    fn reset_is_deterministic_and_reveals_agent_cell() {
        let mut a = env(3);
        let mut b = env(99);
        let oa = a.reset(5).unwrap();
        let ob = b.reset(5).unwrap();
        assert_eq!(oa, ob);
        assert!(a.exploration_rate() > 0.0);
        assert_eq!(a.map().free_count() + 4, a.base_map().free_count());
    }

    #[test]
    fn collision_terminates_with_penalty() {
        let mut e = env(1);
        // Drive straight until something is hit.
        let mut last = None;
        for _ in 0..40 {
            let r = e.step(Action::Forward).unwrap();
            if r.done() {
                last = Some(r);
                break;
            }
        }
        let r = last.expect("a wall is always reached within 40 cells");
        if r.info.collided {
            assert!(r.terminated && !r.truncated);
            assert_eq!(r.reward, -1.005);
        }
        assert!(matches!(e.step(Action::TurnLeft), Err(EnvError::Usage(_))));
    }

    #[test]
    fn truncation_at_max_steps() {
        let cfg = EnvConfig { max_steps: 8, ..EnvConfig::for_level(1) };
        let mut e: ExplorationEnv<f64> = ExplorationEnv::new(cfg).unwrap();
        let mut results = Vec::new();
        for _ in 0..8 {
            results.push(e.step(Action::TurnLeft).unwrap());
        }
        assert!(results[..7].iter().all(|r| !r.done()));
        assert!(results[7].truncated && !results[7].terminated);
        // After one full turn the neighbourhood is fully scanned from here.
        assert!(results[4..].iter().all(|r| r.reward == -0.005));
    }

    #[test]
    fn fixed_pose_behaviour_on_custom_map() {
        let map = load_map("GRIDMAP v1\n5 6\n######\n#....#\n#....#\n#....#\n######\n").unwrap();
        let cfg = EnvConfig { obstacle_count: 0, ..EnvConfig::default() };
        let mut e: ExplorationEnv<f64> = ExplorationEnv::with_map(Arc::new(map), cfg).unwrap();
        e.pose = Pose::new(2, 2, Heading::North);
        e.belief = BeliefMap::for_map(&e.map);
        e.sense();
        e.rho = exploration_rate(&e.belief, &e.map);
        assert!(e.rho > 0.0 && e.rho <= 1.0);
        let r = e.step(Action::Forward).unwrap();
        assert_eq!(e.pose(), Pose::new(1, 2, Heading::North));
        assert!(!r.info.collided);
        let r = e.step(Action::Forward).unwrap();
        assert!(r.info.collided && r.terminated);
        assert_eq!(r.reward, compute_reward(r.info.exploration_rate, r.info.exploration_rate, true, false));
    }

    #[test]
    fn trace_csv_round_trip() {
        let mut e = env(2);
        e.enable_trace();
        for a in [Action::TurnLeft, Action::TurnRight, Action::TurnRight] {
            e.step(a).unwrap();
        }
        let rows = e.trace().unwrap().to_vec();
        assert_eq!(rows.len(), 3);
        let mut buf = Vec::new();
        write_trace(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("step,action,reward,rho,row,col,heading,terminated,truncated\n"));
        assert_eq!(read_trace(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn unknown_map_and_bad_threshold() {
        let cfg = EnvConfig { map_id: "atlantis".into(), ..EnvConfig::default() };
        assert!(matches!(ExplorationEnv::<f64>::new(cfg), Err(EnvError::UnknownMap(_))));
        let cfg = EnvConfig { success_threshold: 1.5, ..EnvConfig::default() };
        assert!(matches!(ExplorationEnv::<f64>::new(cfg), Err(EnvError::InvalidConfig(_))));
    }
}
