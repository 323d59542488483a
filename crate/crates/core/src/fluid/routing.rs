use super::state::FluidState;
use super::FluidError;

/// Clamping that moves a fraction by more than this sets the `clamped` flag.
pub const CLAMP_TOL: f64 = 1e-12;

/// Which branch of the dispatch rule applies to a fluid state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoutingCase {
    /// Some pools sit below the threshold.
    BelowThreshold,
    /// All pools have at least ℓ tasks, some exactly ℓ.
    AtThreshold,
    /// All pools are above the threshold; overflow is routed at random.
    AboveThreshold,
}

/// Arrival split: `p[i]` is the fraction of arrivals joining a pool that
/// currently holds `i - 1` tasks. `p[0]` is unused and always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingVector {
    pub p: Vec<f64>,
    pub case: RoutingCase,
    pub clamped: bool,
}

impl RoutingVector {
    pub fn sum(&self) -> f64 {
        self.p.iter().sum()
    }
}

pub fn classify(q: &FluidState, threshold: usize) -> RoutingCase {
    if !q.is_full(threshold) {
        RoutingCase::BelowThreshold
    } else if !q.is_full(threshold + 1) {
        RoutingCase::AtThreshold
    } else {
        RoutingCase::AboveThreshold
    }
}

/// Routing fractions with unit service rate.
pub fn routing_fractions(q: &FluidState, threshold: usize, lambda: f64) -> Result<RoutingVector, FluidError> {
    routing_fractions_with_rate(q, threshold, lambda, 1.0)
}

/// Routing fractions for the threshold policy with service rate `mu`.
///
/// At the threshold the arrival rate into level ℓ must balance departures
/// from it, so `p[ℓ] = μℓ(1 − q(h))/λ`; above it `p[h] = μh(1 − q(h+1))/λ`
/// and the remainder spreads uniformly over pools with at least h tasks.
/// Both are clamped to `[0, 1]`, keeping the total at one.
pub fn routing_fractions_with_rate(
    q: &FluidState,
    threshold: usize,
    lambda: f64,
    mu: f64,
) -> Result<RoutingVector, FluidError> {
    let depth = q.depth();
    if threshold >= depth {
        return Err(FluidError::Depth { depth, needed: threshold + 1 });
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(FluidError::Parameter(format!("load must be finite and >= 0, got {lambda}")));
    }
    if !(mu > 0.0) {
        return Err(FluidError::Parameter(format!("service rate must be > 0, got {mu}")));
    }
    routing_in_case(q, threshold, lambda, mu, classify(q, threshold))
}

/// Routing fractions with the branch fixed by the caller, so a step can keep
/// one smooth vector field while it approaches a switching surface. Falls back
/// to the actual branch when the requested one is undefined at `q`.
pub(crate) fn routing_in_case(
    q: &FluidState,
    threshold: usize,
    lambda: f64,
    mu: f64,
    case: RoutingCase,
) -> Result<RoutingVector, FluidError> {
    let depth = q.depth();
    let ell = threshold;
    let h = ell + 1;
    let case = if case == RoutingCase::BelowThreshold && !(q.level(ell) < 1.0) { classify(q, ell) } else { case };
    let mut p = vec![0.0; depth + 1];
    let mut clamped = false;
    if lambda == 0.0 && case != RoutingCase::BelowThreshold {
        return Ok(RoutingVector { p, case, clamped });
    }
    match case {
        RoutingCase::BelowThreshold => {
            let free = 1.0 - q.level(ell);
            for i in 1..=ell {
                p[i] = (q.level(i - 1) - q.level(i)) / free;
            }
        }
        RoutingCase::AtThreshold => {
            let raw = mu * ell as f64 * (1.0 - q.level(h)) / lambda;
            let at = raw.clamp(0.0, 1.0);
            clamped = (raw - at).abs() > CLAMP_TOL;
            if ell >= 1 {
                p[ell] = at;
            }
            p[h] = 1.0 - at;
        }
        RoutingCase::AboveThreshold => {
            let raw = mu * h as f64 * (1.0 - q.level(h + 1)) / lambda;
            let at = raw.clamp(0.0, 1.0);
            clamped = (raw - at).abs() > CLAMP_TOL;
            p[h] = at;
            // q(h) is one on this branch; dividing keeps the sum at one when
            // a frozen step drifts off it.
            let rest = (1.0 - at) / q.level(h);
            for i in h + 1..=depth {
                p[i] = rest * (q.level(i - 1) - q.level(i));
            }
        }
    }
    Ok(RoutingVector { p, case, clamped })
}

/// Time derivative of every level under a fixed threshold, unit service rate.
pub fn fluid_rhs(q: &FluidState, threshold: usize, lambda: f64) -> Result<Vec<f64>, FluidError> {
    fluid_rhs_with_rate(q, threshold, lambda, 1.0)
}

/// `dq(i)/dt = λ p_i − μ i [q(i) − q(i+1)]` for `i = 1..=depth`, with
/// `q(depth + 1) = 0`. Entry 0 is zero.
pub fn fluid_rhs_with_rate(q: &FluidState, threshold: usize, lambda: f64, mu: f64) -> Result<Vec<f64>, FluidError> {
    let routing = routing_fractions_with_rate(q, threshold, lambda, mu)?;
    let depth = q.depth();
    let mut d = vec![0.0; depth + 1];
    for i in 1..=depth {
        d[i] = lambda * routing.p[i] - mu * i as f64 * (q.level(i) - q.level(i + 1));
    }
    Ok(d)
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
