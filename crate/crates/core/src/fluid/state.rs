use super::FluidError;

/// Levels at or above `1 - SATURATION_TOL` are treated as exactly full.
pub const SATURATION_TOL: f64 = 1e-12;

/// Truncated fluid occupancy: `q[i]` is the fraction of pools holding at
/// least `i` tasks, for `i = 0..=depth`. Levels beyond `depth` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    q: Vec<f64>,
}

impl FluidState {
    /// Accepts a sequence with `q[0] = 1`, entries in `[0, 1]`, non-increasing.
    pub fn new(q: Vec<f64>) -> Result<Self, FluidError> {
        if q.len() < 2 {
            return Err(FluidError::InvalidState("need at least levels 0 and 1".into()));
        }
        if q[0] != 1.0 {
            return Err(FluidError::InvalidState(format!("q(0) must be 1, got {}", q[0])));
        }
        for (i, w) in q.windows(2).enumerate() {
            if !(w[1] >= 0.0 && w[1] <= 1.0) {
                return Err(FluidError::InvalidState(format!("q({}) = {} outside [0, 1]", i + 1, w[1])));
            }
            if w[1] > w[0] {
                return Err(FluidError::InvalidState(format!(
                    "q({}) = {} exceeds q({}) = {}",
                    i + 1,
                    w[1],
                    i,
                    w[0]
                )));
            }
        }
        Ok(Self { q })
    }

    /// Builds a state from raw values after clamping to `[0, 1]`, snapping
    /// near-full levels to one and restoring monotonicity. Used to project
    /// integrator output back onto the state space.
    pub(crate) fn projected(mut q: Vec<f64>) -> Self {
        q[0] = 1.0;
        for i in 1..q.len() {
            let mut v = q[i].clamp(0.0, 1.0);
            if v >= 1.0 - SATURATION_TOL {
                v = 1.0;
            }
            q[i] = v.min(q[i - 1]);
        }
        Self { q }
    }

    /// Like [`FluidState::projected`], but the mass removed or added by the
    /// projection is put back, lowest free level first (or taken from the
    /// top when negative), so the total mass is unchanged.
    pub(crate) fn projected_conservative(raw: Vec<f64>) -> Self {
        let target: f64 = raw[1..].iter().sum();
        let mut state = Self::projected(raw);
        let q = &mut state.q;
        let mut d = target - q[1..].iter().sum::<f64>();
        if d > 0.0 {
            for i in 1..q.len() {
                let take = (q[i - 1] - q[i]).min(d);
                q[i] += take;
                d -= take;
                if d <= 0.0 {
                    break;
                }
            }
        } else if d < 0.0 {
            for i in (1..q.len()).rev() {
                let next = q.get(i + 1).copied().unwrap_or(0.0);
                let take = (q[i] - next).min(-d);
                q[i] -= take;
                d += take;
                if d >= 0.0 {
                    break;
                }
            }
        }
        state
    }

    /// Empty system: every pool idle.
    pub fn empty(depth: usize) -> Self {
        let mut q = vec![0.0; depth.max(1) + 1];
        q[0] = 1.0;
        Self { q }
    }

    /// Every pool holds exactly `level` tasks.
    pub fn uniform(level: usize, depth: usize) -> Result<Self, FluidError> {
        if level >= depth {
            return Err(FluidError::Depth { depth, needed: level + 1 });
        }
        let mut q = vec![0.0; depth + 1];
        q[..=level].iter_mut().for_each(|v| *v = 1.0);
        Ok(Self { q })
    }

    pub fn depth(&self) -> usize {
        self.q.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.q
    }

    /// `q(i)`, zero beyond the truncation depth.
    pub fn level(&self, i: usize) -> f64 {
        self.q.get(i).copied().unwrap_or(0.0)
    }

    pub fn is_full(&self, i: usize) -> bool {
        self.level(i) >= 1.0 - SATURATION_TOL
    }

    /// Highest level with positive mass (0 for the empty state).
    pub fn top_level(&self) -> usize {
        self.q.iter().rposition(|&v| v > 0.0).unwrap_or(0)
    }

    /// Total mass u = Σ_{i≥1} q(i): tasks per pool.
    pub fn total_mass(&self) -> f64 {
        self.q[1..].iter().sum()
    }

    /// Tail mass v_j = Σ_{i≥j} q(i).
    pub fn tail_mass(&self, j: usize) -> f64 {
        self.q.iter().skip(j.max(1)).sum()
    }

    /// Re-pads (or truncates zero levels) to a new depth.
    pub fn with_depth(&self, depth: usize) -> Result<Self, FluidError> {
        if depth < self.top_level() {
            return Err(FluidError::Depth { depth, needed: self.top_level() });
        }
        let mut q = self.q.clone();
        q.resize(depth.max(1) + 1, 0.0);
        Ok(Self { q })
    }
}

/// Balanced occupancy for load λ: every pool holds ⌊λ⌋ or ⌈λ⌉ tasks, with
/// fraction λ − ⌊λ⌋ at the higher level.
pub fn ideal_occupancy(lambda: f64, depth: usize) -> Result<FluidState, FluidError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(FluidError::Parameter(format!("load must be finite and >= 0, got {lambda}")));
    }
    let floor = lambda.floor() as usize;
    if depth < floor + 2 {
        return Err(FluidError::Depth { depth, needed: floor + 2 });
    }
    let mut q = vec![0.0; depth + 1];
    q[..=floor].iter_mut().for_each(|v| *v = 1.0);
    q[floor + 1] = lambda - floor as f64;
    Ok(FluidState { q })
}

/// u(t) = λ + (u0 − λ)e^{−t}.
pub fn total_mass_closed_form(u0: f64, lambda: f64, t: f64) -> f64 {
    total_mass_closed_form_with_rate(u0, lambda, 1.0, t)
}

/// Mass relaxation for service rate μ: u(t) = ρ + (u0 − ρ)e^{−μt}, ρ = λ/μ.
pub fn total_mass_closed_form_with_rate(u0: f64, lambda: f64, mu: f64, t: f64) -> f64 {
    let rho = lambda / mu;
    rho + (u0 - rho) * (-mu * t).exp()
}

/// Σ_{i≥j} q(i) over the truncated range.
pub fn tail_mass(q: &FluidState, j: usize) -> f64 {
    q.tail_mass(j)
}
