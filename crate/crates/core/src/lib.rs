//! Threshold-based load balancing across parallel infinite-server pools.
//!
//! * [`fluid`]: the mean-field ODE, fluid systems with a learned threshold,
//!   suboptimal equilibria and tuning bounds.
//! * [`des`]: exact discrete-event simulation of `n` pools under the token
//!   based threshold policy and baseline policies.
//! * [`metrics`]: diffusion scalings, resource-share histograms, occupancy
//!   error and settling detection.
//! * [`oracle`]: exact small-system CTMC solutions, the infinite-server
//!   total-task law and the JSQ/threshold coupling.
//! * [`runner`]: experiment configuration, figure presets and CSV output.

pub mod des;
pub mod fluid;
pub mod metrics;
pub mod oracle;
pub mod runner;
pub mod schedule;

pub use schedule::{LoadSchedule, Segment};
