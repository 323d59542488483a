//! Deterministic fluid model of the threshold policy.

mod fixed_point;
mod integrate;
mod routing;
mod state;
mod tuning;

use thiserror::Error;

pub use fixed_point::{
    bisect, erlang_equation, erlang_fixed_point, overload_equation, overload_fixed_point, MAX_FIXED_POINT_DEPTH,
};
pub use integrate::{
    default_depth, integrate, integrate_fluid_system, integrate_static, FluidSample, FluidTrajectory,
    IntegratorOptions, Switch, ThresholdControl,
};
pub use routing::{
    classify, fluid_rhs, fluid_rhs_with_rate, routing_fractions, routing_fractions_with_rate, sup_norm,
    RoutingCase, RoutingVector, CLAMP_TOL,
};
pub use state::{
    ideal_occupancy, tail_mass, total_mass_closed_form, total_mass_closed_form_with_rate, FluidState,
    SATURATION_TOL,
};
pub use tuning::{alpha_min, l_eq_lower, optimal_condition, settling_time_bound, tuning_report, TuningReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FluidError {
    #[error("invalid fluid state: {0}")]
    InvalidState(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("truncation depth {depth} too small, need at least {needed}")]
    Depth { depth: usize, needed: usize },
    #[error("mass {mass:e} reached the top level {depth} at t = {t}")]
    Truncation { t: f64, depth: usize, mass: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("root finding failed: {0}")]
    Root(String),
    #[error("{switches} threshold switches by t = {t}; switches cannot accumulate in a fluid system")]
    Accumulation { switches: usize, t: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
}
