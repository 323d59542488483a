//! Pathwise coupling of JSQ and the threshold policy with `ℓ = ⌊λ⌋`, both
//! truncated at `⌊λ⌋ + 1` tasks per pool.
//!
//! Arrivals come from one shared Poisson stream. Departures are uniformized:
//! potential departures occur at rate `(⌊λ⌋ + 1)n` and one shared uniform `U`
//! decides whether the departure hits a pool at `⌊λ⌋ + 1`, a pool below it,
//! or nothing. Both systems then have the same aggregate
//! `X = (Σ_{i≤⌊λ⌋} Q(i), Q(⌊λ⌋ + 1))` at all times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::OracleError;
use crate::des::{dispatch_decision, CountOccupancy, Dispatch, PolicyKind};

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPaths {
    /// Event times, starting with 0.
    pub t: Vec<f64>,
    /// JSQ system.
    pub x1: Vec<(u64, u64)>,
    /// Threshold system.
    pub x2: Vec<(u64, u64)>,
}

impl CoupledPaths {
    pub fn mismatches(&self) -> usize {
        self.x1.iter().zip(&self.x2).filter(|(a, b)| a != b).count()
    }
}

fn aggregate(occ: &CountOccupancy, f: usize) -> (u64, u64) {
    ((1..=f).map(|i| occ.at_least(i)).sum(), occ.at_least(f + 1))
}

/// Acceptance bands for a potential departure: `U < a` removes a task from a
/// pool at `f + 1`; `a ≤ U < a + b` from a pool below it.
fn bands(occ: &CountOccupancy, f: usize) -> (f64, f64) {
    let n = occ.n() as f64;
    let top = occ.at_least(f + 1);
    let below: u64 = (1..=f).map(|i| occ.at_least(i)).sum::<u64>() - f as u64 * top;
    (top as f64 / n, below as f64 / ((f + 1) as f64 * n))
}

/// Level (at most `f`) of a departing task, proportional to task counts.
fn low_departure_level(occ: &CountOccupancy, f: usize, u: f64) -> usize {
    let weights: Vec<u64> = (1..=f).map(|i| i as u64 * occ.exactly(i)).collect();
    let total: u64 = weights.iter().sum();
    let target = ((u * total as f64) as u64).min(total.saturating_sub(1));
    let mut acc = 0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return k + 1;
        }
    }
    f
}

/// Runs both systems from the empty state.
pub fn coupled_run(n: u64, lambda: f64, horizon: f64, seed: u64) -> Result<CoupledPaths, OracleError> {
    coupled_run_from(&[], n, lambda, horizon, seed)
}

/// Runs both systems from `initial = (Q(1), Q(2), …)`, which must lie within
/// the cap `⌊λ⌋ + 1`.
pub fn coupled_run_from(
    initial: &[u64],
    n: u64,
    lambda: f64,
    horizon: f64,
    seed: u64,
) -> Result<CoupledPaths, OracleError> {
    if !(lambda > 0.0) || lambda.fract() == 0.0 || !lambda.is_finite() {
        return Err(OracleError::Input(format!("coupling needs a positive non-integer load, got {lambda}")));
    }
    if n == 0 || !(horizon >= 0.0) {
        return Err(OracleError::Input("need n >= 1 and horizon >= 0".into()));
    }
    let f = lambda.floor() as usize;
    let cap = f + 1;
    let mut counts = vec![n];
    counts.extend_from_slice(initial);
    let start = CountOccupancy::from_counts(counts)
        .ok_or_else(|| OracleError::Input("initial counts must be non-increasing and at most n".into()))?;
    if start.top_level() > cap {
        return Err(OracleError::Input(format!("initial state exceeds the cap {cap}")));
    }
    let mut jsq = start.clone();
    let mut thr = start;
    let jsq_policy = PolicyKind::Jsq;
    let thr_policy = PolicyKind::ThresholdStatic { threshold: f };

    let stream = |id| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(id);
        r
    };
    let mut arrivals = stream(1);
    let mut departures = stream(2);
    let mut select1 = stream(3);
    let mut select2 = stream(4);

    let arrival_rate = n as f64 * lambda;
    let potential_rate = (f + 1) as f64 * n as f64;
    let exp = |rng: &mut ChaCha8Rng, rate: f64| -(1.0 - rng.random::<f64>()).ln() / rate;

    let mut paths = CoupledPaths { t: vec![0.0], x1: vec![aggregate(&jsq, f)], x2: vec![aggregate(&thr, f)] };
    let mut next_arrival = exp(&mut arrivals, arrival_rate);
    let mut next_departure = exp(&mut departures, potential_rate);
    loop {
        let te = next_arrival.min(next_departure);
        if te > horizon {
            break;
        }
        let t = te;
        if next_arrival <= next_departure {
            for (occ, policy, rng) in [(&mut jsq, &jsq_policy, &mut select1), (&mut thr, &thr_policy, &mut select2)] {
                if let Dispatch::Level(d) = dispatch_decision(policy, occ, f, Some(cap), rng) {
                    occ.add_task(d);
                }
            }
            next_arrival = t + exp(&mut arrivals, arrival_rate);
        } else {
            let u: f64 = departures.random();
            for (occ, rng) in [(&mut jsq, &mut select1), (&mut thr, &mut select2)] {
                let (a, b) = bands(occ, f);
                if u < a {
                    occ.remove_task(cap);
                } else if u < a + b {
                    let level = low_departure_level(occ, f, rng.random());
                    occ.remove_task(level);
                }
            }
            next_departure = t + exp(&mut departures, potential_rate);
        }
        paths.t.push(t);
        paths.x1.push(aggregate(&jsq, f));
        paths.x2.push(aggregate(&thr, f));
    }
    Ok(paths)
}
