//! Exact discrete-event simulation of `n` pools, tracked through the counts
//! `Q(i)` of pools holding at least `i` tasks.

mod config;
mod engine;
mod occupancy;
mod policy;

use thiserror::Error;

pub use config::{InitialOccupancy, PolicyKind, SimConfig, StreamIds};
pub use engine::{
    simulate, Engine, Event, EventKind, OccupancySample, RunCounters, SampledTrajectory, MAX_LEVEL,
};
pub use occupancy::CountOccupancy;
pub use policy::{adapt_threshold, dispatch_decision, next_arrival_time, Dispatch};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("pool level {level} exceeds the supported limit {limit}")]
    Depth { level: usize, limit: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
