use serde::Serialize;

/// Tuning summary for the learning rule at a given load and α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TuningReport {
    pub lambda: f64,
    pub alpha: f64,
    pub lambda_max: f64,
    pub u0: f64,
    /// α must exceed this for every load up to `lambda_max`.
    pub alpha_min: f64,
    /// `λ/(⌊λ⌋+1) < α`: the equilibrium threshold is ⌊λ⌋ (or λ−1, λ for integer λ).
    pub optimal_condition_holds: bool,
    pub l_eq_lower: usize,
    pub l_eq_upper: f64,
    /// Settling-time bound; only defined for non-integer λ under the optimality condition.
    pub t_eq_bound: Option<f64>,
}

/// `λ_max / (λ_max + 1)`.
pub fn alpha_min(lambda_max: f64) -> f64 {
    lambda_max / (lambda_max + 1.0)
}

pub fn optimal_condition(lambda: f64, alpha: f64) -> bool {
    lambda / (lambda.floor() + 1.0) < alpha
}

/// Lower bound on the equilibrium threshold: ⌊λ⌋, or λ − 1 for integer λ
/// (zero at λ = 0).
pub fn l_eq_lower(lambda: f64) -> usize {
    let floor = lambda.floor();
    if lambda == floor {
        (floor as usize).saturating_sub(1)
    } else {
        floor as usize
    }
}

/// Upper bound on the time until the threshold settles at ⌊λ⌋, from initial
/// total mass `u0`.
pub fn settling_time_bound(lambda: f64, alpha: f64, u0: f64) -> Option<f64> {
    if lambda.fract() == 0.0 || !optimal_condition(lambda, alpha) {
        return None;
    }
    let fill = (lambda / (lambda - lambda.floor())).ln();
    if u0 <= lambda {
        Some(fill)
    } else {
        let drain = ((u0 - lambda) / (alpha * lambda.ceil() - lambda)).ln().max(0.0);
        Some(drain + fill)
    }
}

pub fn tuning_report(lambda: f64, alpha: f64, lambda_max: f64, u0: f64) -> TuningReport {
    TuningReport {
        lambda,
        alpha,
        lambda_max,
        u0,
        alpha_min: alpha_min(lambda_max),
        optimal_condition_holds: optimal_condition(lambda, alpha),
        l_eq_lower: l_eq_lower(lambda),
        l_eq_upper: lambda / alpha,
        t_eq_bound: settling_time_bound(lambda, alpha, u0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_for_lambda_max_ten() {
        let r = tuning_report(5.0, 0.91, 10.0, 0.0);
        assert!((r.alpha_min - 10.0 / 11.0).abs() < 1e-15);
        assert!(0.91 > r.alpha_min);
    }

    #[test]
    fn settling_bounds_for_figure_five_starts() {
        let empty = tuning_report(5.5, 0.93, 10.0, 0.0);
        assert!(empty.optimal_condition_holds);
        let t = empty.t_eq_bound.unwrap();
        assert!((t - 11f64.ln()).abs() < 1e-15);
        assert!((t - 2.3979).abs() < 1e-4);

        let full = tuning_report(5.5, 0.93, 10.0, 9.0);
        let t = full.t_eq_bound.unwrap();
        // log(3.5 / 0.08) + log(11)
        let expected = (3.5f64 / 0.08).ln() + 11f64.ln();
        assert!((t - expected).abs() < 1e-9);
        assert!((t - 6.18).abs() < 5e-3);
    }

    #[test]
    fn undefined_cases() {
        assert_eq!(settling_time_bound(5.0, 0.99, 0.0), None);
        // 5.9/6 > 0.93: optimality condition fails
        let r = tuning_report(5.9, 0.93, 10.0, 0.0);
        assert!(!r.optimal_condition_holds);
        assert_eq!(r.t_eq_bound, None);
    }

    #[test]
    fn equilibrium_bounds() {
        assert_eq!(l_eq_lower(5.5), 5);
        assert_eq!(l_eq_lower(5.0), 4);
        assert_eq!(l_eq_lower(0.0), 0);
        let r = tuning_report(5.5, 0.93, 10.0, 0.0);
        assert!(r.l_eq_lower as f64 <= r.l_eq_upper);
    }
}
