//! Grid-based autonomous exploration with cumulative curriculum PPO.
//!
//! The crate bundles a lightweight occupancy-grid simulator with ray-traced
//! lidar, a fixed-shape observation encoder that adapts to any map size, a
//! vectorized environment pool, a small convolutional policy/value network
//! with hand-written gradients, a PPO trainer and a curriculum scheduler that
//! can accumulate (rather than replace) training environments between stages.
//!
//! Network and trainer types are generic over [`Scalar`]; the aliases at the
//! bottom of this file name the concrete instantiations.

pub mod curriculum;
pub mod encoder;
pub mod env;
pub mod gridworld;
pub mod harness;
pub mod maps;
pub mod nn;
pub mod pgm;
pub mod policy;
pub mod ppo;
pub mod scalar;
pub mod seeding;
pub mod sensor;
pub mod vecenv;

pub use scalar::Scalar;

/// Double-precision instantiations.
pub type Observation64 = encoder::Observation<f64>;
pub type Network64 = nn::Network<f64>;
pub type Env64 = env::ExplorationEnv<f64>;
pub type VecEnv64 = vecenv::VecEnv<f64>;

/// Single-precision instantiations.
pub type Observation32 = encoder::Observation<f32>;
pub type Network32 = nn::Network<f32>;
pub type Env32 = env::ExplorationEnv<f32>;
pub type VecEnv32 = vecenv::VecEnv<f32>;
