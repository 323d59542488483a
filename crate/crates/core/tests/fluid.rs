use poolbalance::fluid::{
    alpha_min, erlang_fixed_point, fluid_rhs, ideal_occupancy, integrate_fluid_system, integrate_static,
    optimal_condition, overload_fixed_point, routing_fractions, settling_time_bound, sup_norm, tail_mass,
    total_mass_closed_form, tuning_report, FluidError, FluidState, IntegratorOptions,
};
use poolbalance::LoadSchedule;
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn ideal_occupancy_values() {
    let q = ideal_occupancy(5.5, 8).unwrap();
    assert_eq!(q.as_slice(), &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.0, 0.0]);
    let q = ideal_occupancy(3.0, 6).unwrap();
    assert_eq!(&q.as_slice()[..5], &[1.0, 1.0, 1.0, 1.0, 0.0]);
    assert!(ideal_occupancy(0.0, 3).unwrap().as_slice()[1..].iter().all(|&v| v == 0.0));
    assert!(ideal_occupancy(5.5, 6).is_err());
}

#[test]
fn routing_at_ideal_state() {
    let q = ideal_occupancy(5.5, 10).unwrap();
    let r = routing_fractions(&q, 5, 5.5).unwrap();
    assert!(close(r.p[5], 5.0 / 11.0, 1e-15));
    assert!(close(r.p[6], 6.0 / 11.0, 1e-15));
    assert!(sup_norm(&fluid_rhs(&q, 5, 5.5).unwrap()) < 1e-14);
}

#[test]
fn empty_system_at_zero_threshold() {
    let q = FluidState::empty(4);
    let d = fluid_rhs(&q, 0, 2.0).unwrap();
    assert!(close(d[1], 2.0, 1e-15));
    assert!(d[2..].iter().all(|&v| v == 0.0));
}

#[test]
fn tail_masses() {
    let q = ideal_occupancy(5.5, 10).unwrap();
    assert!(close(tail_mass(&q, 6), 0.5, 1e-15));
    assert!(close(tail_mass(&q, 1), q.total_mass(), 1e-15));
    assert_eq!(tail_mass(&q, 8), 0.0);
}

#[test]
fn closed_form_mass() {
    assert!(close(total_mass_closed_form(0.0, 2.0, 2f64.ln()), 1.0, 1e-15));
    assert!(close(total_mass_closed_form(5.5, 5.5, 3.0), 5.5, 1e-15));
    let mut prev = 9.0;
    for k in 1..40 {
        let u = total_mass_closed_form(9.0, 5.5, k as f64 * 0.5);
        assert!(u < prev && u > 5.5);
        prev = u;
    }
}

#[test]
fn erlang_equilibria() {
    let q = erlang_fixed_point(0.5, 1).unwrap();
    assert!(close(q.level(1), 0.5, 1e-12));
    let q = erlang_fixed_point(5.5, 7).unwrap();
    assert!(q.level(7) > 0.0 && q.level(8) == 0.0);
    assert!(sup_norm(&fluid_rhs(&q, 7, 5.5).unwrap()) < 1e-9);
}

#[test]
fn overload_equilibrium_shape() {
    let q = overload_fixed_point(5.5, 2).unwrap();
    assert!((0..=3).all(|i| q.level(i) == 1.0));
    assert!(q.level(4) > 0.0 && q.level(4) < 1.0);
    assert!(sup_norm(&fluid_rhs(&q, 2, 5.5).unwrap()) < 1e-9);
}

#[test]
fn tuning_values() {
    assert!(close(alpha_min(10.0), 10.0 / 11.0, 1e-15));
    assert!(close(settling_time_bound(5.5, 0.93, 0.0).unwrap(), 11f64.ln(), 1e-12));
    let full = (3.5f64 / 0.08).ln() + 11f64.ln();
    assert!(close(settling_time_bound(5.5, 0.93, 9.0).unwrap(), full, 1e-9));
    assert!(close(full, 6.1764, 1e-4));
    assert!(optimal_condition(5.5, 0.93) && !optimal_condition(5.5, 0.9));
    let r = tuning_report(5.5, 0.93, 10.0, 0.0);
    assert_eq!(r.l_eq_lower, 5);
    assert!(r.optimal_condition_holds);
}

#[test]
fn settles_from_empty_at_log_eleven() {
    let load = LoadSchedule::constant(5.5).unwrap();
    let opts = IntegratorOptions::default();
    let traj = integrate_fluid_system(&FluidState::empty(1), 0, &load, 0.93, 1.0, 6.0, &opts).unwrap();
    let thresholds: Vec<usize> = traj.switches.iter().map(|s| s.threshold).collect();
    assert_eq!(thresholds, vec![0, 1, 2, 3, 4, 5]);
    // every increase happens when the mass reaches the next integer
    for s in &traj.switches[1..] {
        let exact = (5.5 / (5.5 - s.threshold as f64)).ln();
        assert!(close(s.t, exact, 1e-8), "switch to {} at {} vs {exact}", s.threshold, s.t);
    }
    assert!(traj.samples.iter().filter(|s| s.t >= 11f64.ln()).all(|s| s.state.level(5) == 1.0));
}

#[test]
fn overloaded_start_settles_before_bound() {
    let load = LoadSchedule::constant(5.5).unwrap();
    let q0 = FluidState::uniform(9, 12).unwrap();
    let traj = integrate_fluid_system(&q0, 9, &load, 0.93, 1.0, 12.0, &IntegratorOptions::default()).unwrap();
    let (t, l) = traj.settled.unwrap();
    assert_eq!(l, 5);
    assert!(t < settling_time_bound(5.5, 0.93, 9.0).unwrap());
}

#[test]
fn ideal_state_is_stationary() {
    let load = LoadSchedule::constant(5.5).unwrap();
    let q0 = ideal_occupancy(5.5, 20).unwrap();
    let traj = integrate_fluid_system(&q0, 5, &load, 0.93, 1.0, 10.0, &IntegratorOptions::default()).unwrap();
    assert_eq!(traj.switches.len(), 1);
    let end = &traj.final_sample().state;
    assert!((0..=20).all(|i| close(end.level(i), q0.level(i), 1e-9)));
}

#[test]
fn adaptive_start_precondition() {
    let load = LoadSchedule::constant(5.5).unwrap();
    let q0 = FluidState::uniform(9, 12).unwrap();
    let err = integrate_fluid_system(&q0, 0, &load, 0.93, 1.0, 1.0, &IntegratorOptions::default()).unwrap_err();
    assert!(matches!(err, FluidError::Precondition(_)));
}

#[test]
fn shallow_depth_is_reported() {
    let load = LoadSchedule::constant(10.5).unwrap();
    let opts = IntegratorOptions { depth: Some(6), ..Default::default() };
    assert!(integrate_static(&FluidState::empty(1), 0, &load, 1.0, 10.0, &opts).is_err());
}

#[test]
fn service_rate_scales_load() {
    // ρ = λ/μ governs the threshold: μ = 2, λ = 11 behaves like λ = 5.5
    let load = LoadSchedule::constant(11.0).unwrap();
    let traj = poolbalance::fluid::integrate(
        &FluidState::empty(1),
        poolbalance::fluid::ThresholdControl::Adaptive { initial: 0, alpha: 0.93, cap: None },
        &load,
        2.0,
        8.0,
        &IntegratorOptions::default(),
    )
    .unwrap();
    assert_eq!(traj.settled.map(|s| s.1), Some(5));
}

/// Valid occupancy built from a vector of per-level retention factors.
fn state_from(factors: &[f64]) -> FluidState {
    let mut q = vec![1.0];
    let mut v = 1.0;
    for f in factors {
        v *= f;
        q.push(v);
    }
    q.push(0.0);
    FluidState::new(q).unwrap()
}

proptest! {
    #[test]
    fn routing_sums_to_one(
        factors in prop::collection::vec(prop_oneof![Just(1.0), 0.0..1.0f64], 1..12),
        threshold in 0usize..10,
        lambda in 0.05..12.0f64,
    ) {
        let q = state_from(&factors);
        prop_assume!(threshold + 1 < q.depth());
        let r = routing_fractions(&q, threshold, lambda).unwrap();
        prop_assert!((r.sum() - 1.0).abs() < 1e-12);
        prop_assert!(r.p.iter().all(|&p| (0.0..=1.0 + 1e-12).contains(&p)));
    }

    #[test]
    fn mass_derivative_matches(
        factors in prop::collection::vec(prop_oneof![Just(1.0), 0.0..1.0f64], 1..12),
        threshold in 0usize..10,
        lambda in 0.05..12.0f64,
    ) {
        let q = state_from(&factors);
        prop_assume!(threshold + 1 < q.depth());
        let d: f64 = fluid_rhs(&q, threshold, lambda).unwrap().iter().sum();
        prop_assert!((d - (lambda - q.total_mass())).abs() < 1e-9);
    }

    #[test]
    fn alpha_min_is_increasing(a in 0.0..50.0f64, b in 0.0..50.0f64) {
        prop_assume!(a < b);
        prop_assert!(alpha_min(a) < alpha_min(b));
        prop_assert!(alpha_min(b) < 1.0);
    }

    #[test]
    fn alpha_above_min_bounds_equilibrium(lambda_max in 0.5..30.0f64, frac in 0.0..1.0f64, eps in 1e-6..0.05f64) {
        // ℓ_eq ≤ λ/α < λ + 1 for every load up to λ_max
        let alpha = (alpha_min(lambda_max) + eps).min(0.999_999);
        let lambda = frac * lambda_max;
        prop_assert!(lambda / alpha < lambda + 1.0);
    }
}
