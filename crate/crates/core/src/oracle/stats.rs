use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};

use super::OracleError;

/// Mean number of tasks at time `t` in an infinite-server system with total
/// arrival rate `arrival_rate`, service rate `mu` and `initial` tasks at 0.
pub fn mm_infinity_mean(arrival_rate: f64, mu: f64, t: f64, initial: f64) -> f64 {
    let decay = (-mu * t).exp();
    arrival_rate / mu * (1.0 - decay) + initial * decay
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoodnessOfFit {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

impl GoodnessOfFit {
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value >= significance
    }
}

/// Pearson chi-square test of `samples` against Poisson(`mean`). Cells are
/// consecutive values merged until each expects at least `min_expected`
/// observations; the tails are folded into the first and last cells.
pub fn poisson_chi_square(samples: &[u64], mean: f64, min_expected: f64) -> Result<GoodnessOfFit, OracleError> {
    if samples.is_empty() || !(mean > 0.0) {
        return Err(OracleError::Input("need samples and a positive mean".into()));
    }
    let law = Poisson::new(mean).map_err(|e| OracleError::Input(e.to_string()))?;
    let m = samples.len() as f64;
    // cell boundaries: [lo_k, hi_k] inclusive
    let mut cells: Vec<(u64, u64, f64)> = Vec::new();
    let mut lo = 0u64;
    let mut prob = law.cdf(0);
    let mut k = 0u64;
    loop {
        let rest = law.sf(k);
        if prob * m >= min_expected && rest * m >= min_expected {
            cells.push((lo, k, prob));
            lo = k + 1;
            prob = 0.0;
        } else if rest * m < min_expected {
            // fold the tail into the current cell
            prob += rest;
            match cells.last_mut() {
                Some(last) if prob * m < min_expected => {
                    last.1 = u64::MAX;
                    last.2 += prob;
                }
                _ => cells.push((lo, u64::MAX, prob)),
            }
            break;
        }
        k += 1;
        prob += law.pmf(k);
    }
    if cells.len() < 2 {
        return Err(OracleError::Input("too few samples for a chi-square test".into()));
    }
    let mut observed = vec![0u64; cells.len()];
    for &x in samples {
        let i = cells.iter().position(|&(a, b, _)| x >= a && x <= b).expect("cells cover all values");
        observed[i] += 1;
    }
    let statistic = cells
        .iter()
        .zip(&observed)
        .map(|(&(_, _, p), &o)| {
            let e = p * m;
            (o as f64 - e).powi(2) / e
        })
        .sum::<f64>();
    let dof = cells.len() - 1;
    let chi = ChiSquared::new(dof as f64).map_err(|e| OracleError::Input(e.to_string()))?;
    Ok(GoodnessOfFit { statistic, degrees_of_freedom: dof, p_value: chi.sf(statistic) })
}
