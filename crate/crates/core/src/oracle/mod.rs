//! Independent reference results: exact chains for tiny systems, the
//! infinite-server total-task law and the JSQ/threshold coupling.

mod coupling;
mod ctmc;
mod stats;

use thiserror::Error;

pub use coupling::{coupled_run, coupled_run_from, CoupledPaths};
pub use ctmc::{
    ctmc_generator, ctmc_stationary, dispatch_probabilities, simulated_state_frequencies, total_variation,
    write_stationary_csv, GeneratorMatrix, MAX_CTMC_STATES, STATIONARY_RESIDUAL,
};
pub use stats::{mm_infinity_mean, poisson_chi_square, GoodnessOfFit};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{states} states exceed the limit of {limit}")]
    Size { states: u64, limit: usize },
    #[error("stationary solve failed: {0}")]
    Solver(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Sim(#[from] crate::des::SimError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
