//! Run configuration, multi-seed training, evaluation reports, latency
//! benchmarking and trajectory rendering.

pub mod bench;
pub mod config;
pub mod evaluation;
pub mod metrics;
pub mod render;
pub mod run;

use thiserror::Error;

use crate::env::EnvError;
use crate::nn::NetError;
use crate::ppo::PpoError;

pub use bench::{bench, BenchReport};
pub use config::{EnvSettings, Precision, RunConfig};
pub use evaluation::{evaluate_maps, EpisodeRow, EvalReport, MapSummary, ScriptedCoveragePolicy};
pub use metrics::{aggregate_runs, sample_efficiency, AggregateRow, MeanStd, MetricColumn};
pub use render::{count_marks, render_trace, TRAJECTORY_LEVEL};
pub use run::{run_training, CsvSink, RunSummary, SeedSummary};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unknown map `{0}`")]
    UnknownMap(String),
    #[error("cannot read {0}")]
    MissingFile(String),
    #[error("invalid trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Env(EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Train(#[from] PpoError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<EnvError> for HarnessError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::UnknownMap(m) => HarnessError::UnknownMap(m),
            other => HarnessError::Env(other),
        }
    }
}

impl HarnessError {
    /// True for problems with the invocation itself (bad config, unknown
    /// map, missing input) rather than failures while running.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            HarnessError::Config(_)
                | HarnessError::UnknownMap(_)
                | HarnessError::MissingFile(_)
                | HarnessError::Trace(_)
        )
    }
}
