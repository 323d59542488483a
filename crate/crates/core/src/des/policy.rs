use rand::Rng;

use super::config::PolicyKind;
use super::occupancy::CountOccupancy;
use crate::schedule::LoadSchedule;

/// Outcome of routing one arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dispatch {
    /// Sent to a pool holding this many tasks before the arrival.
    Level(usize),
    Blocked,
}

/// Picks the destination level of an arrival. Pools within a level are
/// exchangeable, so only the level is drawn. `threshold` is used by the
/// threshold policies only. With a `capacity`, a destination already holding
/// that many tasks blocks the arrival.
pub fn dispatch_decision<R: Rng + ?Sized>(
    policy: &PolicyKind,
    occ: &CountOccupancy,
    threshold: usize,
    capacity: Option<usize>,
    rng: &mut R,
) -> Dispatch {
    let level = match *policy {
        PolicyKind::ThresholdStatic { .. } | PolicyKind::ThresholdAdaptive { .. } => {
            threshold_level(occ, threshold, rng.random())
        }
        PolicyKind::Jsq => shortest_level(occ),
        PolicyKind::Random => occ.pick_pool_level(0, None, rng.random()).unwrap_or(0),
        PolicyKind::PowerOfD { d } => (0..d)
            .map(|_| occ.pick_pool_level(0, None, rng.random()).unwrap_or(0))
            .min()
            .unwrap_or(0),
    };
    match capacity {
        Some(b) if level >= b => Dispatch::Blocked,
        _ => Dispatch::Level(level),
    }
}

/// Green token (pool below ℓ) if any, else yellow (pool at ℓ), else a
/// uniformly random pool.
fn threshold_level(occ: &CountOccupancy, threshold: usize, u: f64) -> usize {
    if threshold > 0 {
        if let Some(level) = occ.pick_pool_level(0, Some(threshold - 1), u) {
            return level;
        }
    }
    if occ.exactly(threshold) > 0 {
        return threshold;
    }
    occ.pick_pool_level(0, None, u).unwrap_or(0)
}

fn shortest_level(occ: &CountOccupancy) -> usize {
    let n = occ.n();
    (0..).find(|&i| occ.at_least(i + 1) < n).unwrap_or(0)
}

/// Learning rule, applied on an arrival with the occupancy seen just before
/// it: raise the threshold when at most one pool is below `h = ℓ + 1`, lower
/// it when the fraction of pools at or above ℓ is at most α.
pub fn adapt_threshold(occ: &CountOccupancy, threshold: usize, alpha: f64, cap: Option<usize>) -> usize {
    let n = occ.n();
    if occ.at_least(threshold + 1) + 1 >= n {
        if cap.is_none_or(|c| threshold < c) {
            return threshold + 1;
        }
        return threshold;
    }
    if threshold >= 1 && occ.at_least(threshold) as f64 / n as f64 <= alpha {
        return threshold - 1;
    }
    threshold
}

/// Next arrival epoch after `t` for `n` pools, by thinning a Poisson stream of
/// rate `n·λ_max`. Infinite when no positive rate remains.
pub fn next_arrival_time<R: Rng + ?Sized>(schedule: &LoadSchedule, t: f64, n: u64, rng: &mut R) -> f64 {
    let lambda_max = schedule.lambda_max();
    if !(lambda_max > 0.0) {
        return f64::INFINITY;
    }
    let last_positive = schedule
        .segments()
        .iter()
        .rposition(|s| s.lambda > 0.0)
        .map(|i| schedule.segments()[i].start);
    let Some(last_positive_start) = last_positive else {
        return f64::INFINITY;
    };
    let all_zero_after = |s: f64| s >= last_positive_start && schedule.rate_at(s) == 0.0;
    let envelope = n as f64 * lambda_max;
    let mut s = t;
    loop {
        if all_zero_after(s) {
            return f64::INFINITY;
        }
        let u: f64 = rng.random();
        s += -(1.0 - u).ln() / envelope;
        let accept: f64 = rng.random();
        if accept * lambda_max < schedule.rate_at(s) {
            return s;
        }
    }
}
