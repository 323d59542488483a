use poolbalance::des::{simulate, PolicyKind, SimConfig};
use poolbalance::oracle::{
    coupled_run, coupled_run_from, ctmc_generator, ctmc_stationary, dispatch_probabilities, mm_infinity_mean,
    poisson_chi_square, simulated_state_frequencies, total_variation, OracleError,
};
use poolbalance::LoadSchedule;
use proptest::prelude::*;

#[test]
fn single_server_loss_system() {
    let policy = PolicyKind::ThresholdStatic { threshold: 0 };
    let g = ctmc_generator(1, 1, 1.5, 1.0, &policy).unwrap();
    let pi = ctmc_stationary(&g).unwrap();
    assert_eq!(pi.len(), 2);
    assert!((pi[0] - 1.0 / 2.5).abs() < 1e-12);
    assert!((pi[1] - 1.5 / 2.5).abs() < 1e-12);
}

#[test]
fn generator_rows_sum_to_zero() {
    let g = ctmc_generator(3, 3, 1.2, 1.0, &PolicyKind::ThresholdStatic { threshold: 1 }).unwrap();
    for r in 0..g.rates.nrows() {
        assert!(g.rates.row(r).sum().abs() < 1e-12);
    }
    assert!(g.connected);
}

#[test]
fn stationary_balance_small_chain() {
    let g = ctmc_generator(2, 3, 1.2, 1.0, &PolicyKind::ThresholdStatic { threshold: 1 }).unwrap();
    let pi = ctmc_stationary(&g).unwrap();
    assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // global balance: π Q = 0
    for j in 0..pi.len() {
        let flow: f64 = (0..pi.len()).map(|i| pi[i] * g.rates[(i, j)]).sum();
        assert!(flow.abs() < 1e-10);
    }
}

#[test]
fn dispatch_probabilities_sum_to_one() {
    for policy in [
        PolicyKind::ThresholdStatic { threshold: 1 },
        PolicyKind::Jsq,
        PolicyKind::Random,
        PolicyKind::PowerOfD { d: 2 },
    ] {
        let p = dispatch_probabilities(&policy, 4, &[3, 1, 0]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{}", policy.name());
    }
}

#[test]
fn oversized_chain_is_rejected() {
    let err = ctmc_generator(20, 20, 1.0, 1.0, &PolicyKind::Jsq).unwrap_err();
    assert!(matches!(err, OracleError::Size { .. }));
}

#[test]
fn simulation_matches_exact_chain() {
    let policy = PolicyKind::ThresholdStatic { threshold: 1 };
    let g = ctmc_generator(2, 2, 0.8, 1.0, &policy).unwrap();
    let pi = ctmc_stationary(&g).unwrap();
    let mut c = SimConfig::new(2, LoadSchedule::constant(0.8).unwrap(), policy, 50_000.0, 3);
    c.capacity = Some(2);
    c.sample_dt = 1e6;
    let freq = simulated_state_frequencies(&g, c, 50.0).unwrap();
    assert!(total_variation(&pi, &freq) < 0.01);
}

#[test]
fn coupling_first_arrival() {
    let p = coupled_run(10, 2.5, 5.0, 0).unwrap();
    // from an empty start the first state change is an arrival to an idle pool
    let first = |x: &[(u64, u64)]| x.iter().copied().find(|&s| s != (0, 0));
    assert_eq!(first(&p.x1), Some((1, 0)));
    assert_eq!(first(&p.x2), Some((1, 0)));
}

#[test]
fn coupling_holds_across_sizes_and_seeds() {
    for n in [5u64, 10, 50] {
        for lambda in [1.5, 2.5] {
            for seed in 0..20 {
                let p = coupled_run(n, lambda, 5.0, seed).unwrap();
                assert_eq!(p.mismatches(), 0, "n={n} λ={lambda} seed={seed}");
            }
        }
    }
}

#[test]
fn coupling_from_loaded_start() {
    let start = [10, 10, 4];
    for seed in 0..20 {
        assert_eq!(coupled_run_from(&start, 10, 2.5, 5.0, seed).unwrap().mismatches(), 0);
    }
}

#[test]
fn infinite_server_mean() {
    assert!((mm_infinity_mean(40.0, 1.0, 2.0, 0.0) - 40.0 * (1.0 - (-2f64).exp())).abs() < 1e-12);
    assert_eq!(mm_infinity_mean(40.0, 1.0, 0.0, 7.0), 7.0);
    assert!((mm_infinity_mean(40.0, 1.0, 60.0, 0.0) - 40.0).abs() < 1e-9);
}

#[test]
fn replication_mean_within_three_standard_errors() {
    let totals: Vec<u64> = (0..300)
        .map(|seed| {
            let c = SimConfig::new(20, LoadSchedule::constant(2.0).unwrap(), PolicyKind::Jsq, 2.0, 5000 + seed);
            simulate(c).unwrap().samples.last().unwrap().total_tasks()
        })
        .collect();
    let mean = mm_infinity_mean(40.0, 1.0, 2.0, 0.0);
    let emp = totals.iter().sum::<u64>() as f64 / totals.len() as f64;
    // Poisson: variance equals the mean
    let se = (mean / totals.len() as f64).sqrt();
    assert!((emp - mean).abs() <= 3.0 * se, "{emp} vs {mean}");
    assert!(poisson_chi_square(&totals, mean, 5.0).unwrap().passes(0.001));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn coupling_never_diverges(seed in any::<u64>(), n in 2u64..40, lambda in 0.3..6.0f64) {
        prop_assert_eq!(coupled_run(n, lambda, 3.0, seed).unwrap().mismatches(), 0);
    }
}
