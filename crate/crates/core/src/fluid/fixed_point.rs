//! Suboptimal equilibria of the fixed-threshold ODE.
//!
//! With a threshold above ⌊λ⌋ the equilibrium is an Erlang-B occupancy
//! profile truncated at ℓ; with a threshold below the load every pool holds at
//! least h tasks and the overflow levels follow a birth–death law.

use super::state::FluidState;
use super::FluidError;

/// Largest depth tried when fitting the tail of an overload equilibrium.
pub const MAX_FIXED_POINT_DEPTH: usize = 4096;

/// Tail cut-off for the overload equilibrium; far below the integrator's
/// truncation tolerance so the residual stays small.
const TAIL_CUTOFF: f64 = 1e-16;

/// Finds a root of `f` on `[lo, hi]` by bisection, to machine precision.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> Result<f64, FluidError> {
    let (mut f_lo, f_hi) = (f(lo), f(hi));
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(FluidError::Root(format!(
            "no sign change on [{lo}, {hi}]: f = ({f_lo}, {f_hi})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `λ/x − Σ_{i=1}^{ℓ} ℓ!/(ℓ−i)! ((1−x)/λ)^{i−1}`; its root in (0, 1) is the
/// blocking probability of the equivalent Erlang-B system.
pub fn erlang_equation(lambda: f64, threshold: usize, x: f64) -> f64 {
    let ratio = (1.0 - x) / lambda;
    let mut term = threshold as f64;
    let mut sum = 0.0;
    for i in 1..=threshold {
        if i > 1 {
            term *= (threshold - i + 1) as f64 * ratio;
        }
        sum += term;
    }
    lambda / x - sum
}

/// Equilibrium for a threshold above ⌊λ⌋: support `{0..ℓ}`, `q(ℓ) = θ`.
pub fn erlang_fixed_point(lambda: f64, threshold: usize) -> Result<FluidState, FluidError> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(FluidError::Parameter(format!("load must be finite and > 0, got {lambda}")));
    }
    if threshold <= lambda.floor() as usize {
        return Err(FluidError::Precondition(format!(
            "threshold {threshold} must exceed floor(load) = {}",
            lambda.floor()
        )));
    }
    let lo = f64::MIN_POSITIVE.sqrt();
    let theta = bisect(|x| erlang_equation(lambda, threshold, x), lo, 1.0)?;
    // Level gaps q(ℓ−j) − q(ℓ−j+1) = ℓ!/(ℓ−j)! ((1−θ)/λ)^j θ, built upward from q(ℓ) = θ.
    let ratio = (1.0 - theta) / lambda;
    let mut q = vec![0.0; threshold + 3];
    q[threshold] = theta;
    let mut gap = theta;
    for j in 1..=threshold {
        gap *= (threshold - j + 1) as f64 * ratio;
        q[threshold - j] = q[threshold - j + 1] + gap;
    }
    let top = q[0];
    if (top - 1.0).abs() > 1e-9 {
        return Err(FluidError::Root(format!("normalization failed: q(0) = {top}")));
    }
    q[0] = 1.0;
    for i in 1..threshold {
        q[i] = q[i].min(q[i - 1]);
    }
    FluidState::new(q)
}

/// `Σ_{i≥h} h!/i! [λ − h(1−x)]^{i−h} (1−x) − 1`, summed until terms vanish.
pub fn overload_equation(lambda: f64, threshold: usize, x: f64) -> f64 {
    let h = (threshold + 1) as f64;
    let birth = lambda - h * (1.0 - x);
    let mut term = 1.0;
    let mut sum = 0.0;
    let mut i = threshold + 1;
    loop {
        sum += term;
        i += 1;
        term *= birth / i as f64;
        if term < 1e-18 * sum && (i as f64) > birth {
            break;
        }
    }
    sum * (1.0 - x) - 1.0
}

/// Equilibrium for a threshold below the load (`h = ℓ + 1 < λ`): every pool
/// holds at least h tasks and a fraction `1 − θ` holds exactly h.
pub fn overload_fixed_point(lambda: f64, threshold: usize) -> Result<FluidState, FluidError> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(FluidError::Parameter(format!("load must be finite and > 0, got {lambda}")));
    }
    let h = threshold + 1;
    if !((h as f64) < lambda) {
        return Err(FluidError::Precondition(format!(
            "threshold {threshold} needs threshold + 1 < load {lambda}"
        )));
    }
    let theta = bisect(|x| overload_equation(lambda, threshold, x), 0.0, 1.0)?;
    let birth = lambda - h as f64 * (1.0 - theta);
    // pi[k] = q(h+k) − q(h+k+1)
    let mut pi = vec![1.0 - theta];
    loop {
        let k = pi.len();
        let next = pi[k - 1] * birth / (h + k) as f64;
        if next < TAIL_CUTOFF && (h + k) as f64 > birth {
            break;
        }
        if h + k + 2 > MAX_FIXED_POINT_DEPTH {
            return Err(FluidError::Depth { depth: MAX_FIXED_POINT_DEPTH, needed: h + k + 2 });
        }
        pi.push(next);
    }
    let depth = h + pi.len() + 1;
    let mut q = vec![0.0; depth + 1];
    q[..=h].iter_mut().for_each(|v| *v = 1.0);
    // Tail sums from the top keep small levels accurate.
    let mut acc = 0.0;
    for k in (1..pi.len()).rev() {
        acc += pi[k];
        q[h + k] = acc;
    }
    FluidState::new(q)
}
