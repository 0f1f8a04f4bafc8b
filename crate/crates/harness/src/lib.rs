//! Rollout driver for the swarm simulator: parallel throughput benchmark,
//! trajectory recording and bit-exact replay verification.

pub mod benchmark;
pub mod dump;
pub mod policy;

use swarmsim_core::{ConfigError, EnvError};
use thiserror::Error;

pub use benchmark::{run_benchmark, BenchmarkConfig, BenchmarkReport, Budget};
pub use dump::{record_trajectory, replay_actions, Dump, Encoding, RecordOptions, Verdict};
pub use policy::{Policy, PolicyKind};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("worker {worker} failed: {source}")]
    Worker {
        worker: usize,
        #[source]
        source: EnvError,
    },
    #[error("invalid benchmark settings: {0}")]
    InvalidBenchmark(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed dump at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },
}
