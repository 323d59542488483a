use std::collections::{HashMap, VecDeque};
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use super::OracleError;
use crate::des::{Engine, PolicyKind, SimConfig};

/// Largest state space handled by the dense solver.
pub const MAX_CTMC_STATES: usize = 5000;

/// Residual bound for [`ctmc_stationary`].
pub const STATIONARY_RESIDUAL: f64 = 1e-10;

/// Generator of the aggregate chain for `n` pools capped at `capacity` tasks.
/// States are `(Q(1), …, Q(B))` in lexicographic order.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub n: u64,
    pub capacity: usize,
    pub states: Vec<Vec<u64>>,
    pub rates: DMatrix<f64>,
    /// Every state can be reached from the empty state.
    pub connected: bool,
}

impl GeneratorMatrix {
    pub fn index_of(&self, state: &[u64]) -> Option<usize> {
        self.states.binary_search_by(|s| s.as_slice().cmp(state)).ok()
    }

    pub fn max_row_sum(&self) -> f64 {
        self.rates.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max)
    }
}

/// Non-increasing sequences of length `b` with entries in `0..=n`, in
/// lexicographic order.
fn enumerate_states(n: u64, b: usize) -> Vec<Vec<u64>> {
    fn rec(prefix: &mut Vec<u64>, max: u64, left: usize, out: &mut Vec<Vec<u64>>) {
        if left == 0 {
            out.push(prefix.clone());
            return;
        }
        for v in 0..=max {
            prefix.push(v);
            rec(prefix, v, left - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(b), n, b, &mut out);
    out
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Probability that an arrival joins a pool at each level `0..=b`, from the
/// state `(Q(1..=b))` with `Q(0) = n`.
pub fn dispatch_probabilities(policy: &PolicyKind, n: u64, state: &[u64]) -> Result<Vec<f64>, OracleError> {
    let b = state.len();
    let q = |i: usize| if i == 0 { n } else { state.get(i - 1).copied().unwrap_or(0) };
    let x = |k: usize| (q(k) - q(k + 1)) as f64;
    let nf = n as f64;
    let mut p = vec![0.0; b + 1];
    match *policy {
        PolicyKind::ThresholdStatic { threshold } => {
            let green = n - q(threshold);
            if green > 0 {
                for (k, pk) in p.iter_mut().enumerate().take(threshold.min(b + 1)) {
                    *pk = x(k) / green as f64;
                }
            } else if x(threshold) > 0.0 {
                p[threshold] = 1.0;
            } else {
                for (k, pk) in p.iter_mut().enumerate() {
                    *pk = x(k) / nf;
                }
            }
        }
        PolicyKind::Jsq => {
            let k = (0..=b).find(|&k| x(k) > 0.0).unwrap_or(b);
            p[k] = 1.0;
        }
        PolicyKind::Random => {
            for (k, pk) in p.iter_mut().enumerate() {
                *pk = x(k) / nf;
            }
        }
        PolicyKind::PowerOfD { d } => {
            for (k, pk) in p.iter_mut().enumerate() {
                *pk = (q(k) as f64 / nf).powi(d as i32) - (q(k + 1) as f64 / nf).powi(d as i32);
            }
        }
        PolicyKind::ThresholdAdaptive { .. } => {
            return Err(OracleError::Unsupported("the exact chain needs a fixed dispatch rule".into()));
        }
    }
    Ok(p)
}

/// Builds the generator for `n` pools with buffer `capacity`, total arrival
/// rate `nλ` and service rate `μ` per task. Arrivals routed to a full pool are
/// lost.
pub fn ctmc_generator(
    n: u64,
    capacity: usize,
    lambda: f64,
    mu: f64,
    policy: &PolicyKind,
) -> Result<GeneratorMatrix, OracleError> {
    if n == 0 || capacity == 0 {
        return Err(OracleError::Input("need n >= 1 and capacity >= 1".into()));
    }
    if !(lambda >= 0.0 && mu > 0.0) {
        return Err(OracleError::Input(format!("need λ >= 0 and μ > 0, got {lambda}, {mu}")));
    }
    let size = binomial(n + capacity as u64, capacity as u64);
    if size > MAX_CTMC_STATES as f64 {
        return Err(OracleError::Size { states: size as u64, limit: MAX_CTMC_STATES });
    }
    let states = enumerate_states(n, capacity);
    let index: HashMap<&[u64], usize> = states.iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect();
    let m = states.len();
    let mut rates = DMatrix::<f64>::zeros(m, m);
    let nl = n as f64 * lambda;
    for (from, s) in states.iter().enumerate() {
        let p = dispatch_probabilities(policy, n, s)?;
        // joining a pool at level k raises Q(k+1); level `capacity` blocks
        for (k, &pk) in p.iter().enumerate().take(capacity) {
            if pk > 0.0 && nl > 0.0 {
                let mut t = s.clone();
                t[k] += 1;
                rates[(from, index[t.as_slice()])] += nl * pk;
            }
        }
        for k in 1..=capacity {
            let pools = s[k - 1] - s.get(k).copied().unwrap_or(0);
            if pools > 0 {
                let mut t = s.clone();
                t[k - 1] -= 1;
                rates[(from, index[t.as_slice()])] += mu * k as f64 * pools as f64;
            }
        }
        let out: f64 = rates.row(from).sum();
        rates[(from, from)] = -out;
    }
    let connected = reachable_from(&rates, 0).iter().all(|&r| r);
    Ok(GeneratorMatrix { n, capacity, states, rates, connected })
}

fn reachable_from(rates: &DMatrix<f64>, start: usize) -> Vec<bool> {
    let m = rates.nrows();
    let mut seen = vec![false; m];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..m {
            if j != i && rates[(i, j)] > 0.0 && !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen
}

/// Solves `πG = 0`, `Σπ = 1` with the last balance equation replaced by the
/// normalization.
pub fn ctmc_stationary(g: &GeneratorMatrix) -> Result<Vec<f64>, OracleError> {
    let m = g.rates.nrows();
    let mut a = g.rates.transpose();
    a.row_mut(m - 1).fill(1.0);
    let mut rhs = DVector::<f64>::zeros(m);
    rhs[m - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| OracleError::Solver("singular system: the chain is not irreducible".into()))?;
    let residual = (pi.transpose() * &g.rates).amax();
    if !(residual < STATIONARY_RESIDUAL) || pi.iter().any(|&v| v < -1e-12) {
        return Err(OracleError::Solver(format!("residual {residual:e}")));
    }
    Ok(pi.iter().map(|&v| v.max(0.0)).collect())
}

pub fn write_stationary_csv<W: Write>(g: &GeneratorMatrix, pi: &[f64], out: W) -> Result<(), OracleError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=g.capacity).map(|i| format!("Q_{i}")).collect();
    header.push("pi".into());
    w.write_record(&header)?;
    for (s, p) in g.states.iter().zip(pi) {
        let mut row: Vec<String> = s.iter().map(|v| v.to_string()).collect();
        row.push(p.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long-run fraction of time the simulator spends in each state of `g`,
/// measured exactly between events over `[burn_in, config.horizon]`.
/// The config must use the generator's capacity.
pub fn simulated_state_frequencies(g: &GeneratorMatrix, config: SimConfig, burn_in: f64) -> Result<Vec<f64>, OracleError> {
    if config.capacity != Some(g.capacity) || config.n != g.n {
        return Err(OracleError::Input("simulation config must match the generator's n and capacity".into()));
    }
    let horizon = config.horizon;
    let mut engine = Engine::new(config)?;
    let mut time_in = vec![0.0; g.states.len()];
    let state_index = |e: &Engine| -> usize {
        let s: Vec<u64> = (1..=g.capacity).map(|i| e.occupancy().at_least(i)).collect();
        g.index_of(&s).expect("simulated state outside the enumeration")
    };
    let mut current = state_index(&engine);
    let mut t: f64 = 0.0;
    loop {
        let next = engine.next_event_time().min(horizon);
        if next > burn_in {
            time_in[current] += next - t.max(burn_in);
        }
        if next >= horizon {
            break;
        }
        engine.step()?;
        t = engine.time();
        current = state_index(&engine);
    }
    let total: f64 = time_in.iter().sum();
    if !(total > 0.0) {
        return Err(OracleError::Input("empty measurement window".into()));
    }
    Ok(time_in.into_iter().map(|v| v / total).collect())
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
