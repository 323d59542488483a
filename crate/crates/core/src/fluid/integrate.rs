//! Event-driven integration of fluid systems.
//!
//! Between threshold switches the occupancy follows the fixed-threshold ODE.
//! The integrator is an embedded Dormand–Prince 5(4) pair. Switching
//! surfaces are localized by bisection on the step length:
//!
//! * decrease: `q(ℓ)` falls to `α` (never at `ℓ = 0`),
//! * increase: `q(h)` reaches one (unless the threshold is capped),
//! * saturation: `q(ℓ)` (or `q(h)` for a static or capped threshold)
//!   reaches one, which changes the routing branch but not the threshold.
//!
//! Routing fractions are evaluated on the projection of each stage onto the
//! state space, so the computed solution is the one generated by the clamped
//! routing fractions; other solutions of the (non-unique) ODE are not sought.
//! Accepted states are projected too, with the clipped mass returned to the
//! lowest level that has room, so the total mass follows its closed form.

use std::io::Write;

use super::routing::{classify, routing_in_case, RoutingCase};
use super::state::{FluidState, SATURATION_TOL};
use super::FluidError;
use crate::schedule::LoadSchedule;

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorOptions {
    /// Relative per-step error tolerance.
    pub rtol: f64,
    /// Absolute per-step error tolerance.
    pub atol: f64,
    /// Width of the time bracket left after event bisection.
    pub event_tol: f64,
    /// Largest admissible mass in the top retained level.
    pub trunc_tol: f64,
    /// Abort after this many threshold switches.
    pub max_switches: usize,
    /// Output sampling interval.
    pub sample_dt: f64,
    /// Truncation depth; derived from the load bound and the initial state when `None`.
    pub depth: Option<usize>,
    /// A trajectory whose last switch is at least this far from the horizon is reported settled.
    pub settle_quiet: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-8,
            event_tol: 1e-10,
            trunc_tol: 1e-8,
            max_switches: 10_000,
            sample_dt: 0.01,
            depth: None,
            settle_quiet: 1.0,
        }
    }
}

/// Threshold behaviour during integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdControl {
    Static(usize),
    Adaptive { initial: usize, alpha: f64, cap: Option<usize> },
}

impl ThresholdControl {
    fn initial(&self) -> usize {
        match *self {
            ThresholdControl::Static(l) => l,
            ThresholdControl::Adaptive { initial, .. } => initial,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidSample {
    pub t: f64,
    pub threshold: usize,
    pub state: FluidState,
}

/// Threshold ℓ_j in force from time τ_j.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Switch {
    pub t: f64,
    pub threshold: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidTrajectory {
    pub samples: Vec<FluidSample>,
    /// Starts with `(0, ℓ0)`; every later entry is a threshold update.
    pub switches: Vec<Switch>,
    /// `(t_eq, ℓ_eq)` when the last switch lies far enough before the horizon.
    pub settled: Option<(f64, usize)>,
    pub horizon: f64,
    pub depth: usize,
}

impl FluidTrajectory {
    pub fn threshold_at(&self, t: f64) -> usize {
        let idx = self.switches.partition_point(|s| s.t <= t).saturating_sub(1);
        self.switches[idx].threshold
    }

    pub fn final_sample(&self) -> &FluidSample {
        self.samples.last().expect("trajectory always holds the initial sample")
    }

    /// Number of threshold updates (excluding the initial entry).
    pub fn update_count(&self) -> usize {
        self.switches.len() - 1
    }

    /// CSV with columns `t, l, q_1..q_depth`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "l".to_string()];
        header.extend((1..=self.depth).map(|i| format!("q_{i}")));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![s.t.to_string(), s.threshold.to_string()];
            row.extend(s.state.as_slice()[1..].iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV with columns `t, l` listing every switch.
    pub fn write_switches_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "l"])?;
        for s in &self.switches {
            w.write_record([s.t.to_string(), s.threshold.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Default truncation depth: room for ten levels above the load bound and
/// five above the initial top level.
pub fn default_depth(lambda_max: f64, initial_top: usize) -> usize {
    (lambda_max.ceil() as usize + 10).max(initial_top + 5)
}

/// Integrates a fluid system with the adaptive threshold rule.
///
/// The start must satisfy `q0(ℓ0) > α` and `q0(ℓ0 + 1) < 1`.
pub fn integrate_fluid_system(
    q0: &FluidState,
    initial_threshold: usize,
    load: &LoadSchedule,
    alpha: f64,
    mu: f64,
    horizon: f64,
    opts: &IntegratorOptions,
) -> Result<FluidTrajectory, FluidError> {
    let control = ThresholdControl::Adaptive { initial: initial_threshold, alpha, cap: None };
    integrate(q0, control, load, mu, horizon, opts)
}

/// Integrates the fixed-threshold ODE.
pub fn integrate_static(
    q0: &FluidState,
    threshold: usize,
    load: &LoadSchedule,
    mu: f64,
    horizon: f64,
    opts: &IntegratorOptions,
) -> Result<FluidTrajectory, FluidError> {
    integrate(q0, ThresholdControl::Static(threshold), load, mu, horizon, opts)
}

pub fn integrate(
    q0: &FluidState,
    control: ThresholdControl,
    load: &LoadSchedule,
    mu: f64,
    horizon: f64,
    opts: &IntegratorOptions,
) -> Result<FluidTrajectory, FluidError> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(FluidError::Parameter(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    if !(mu > 0.0) {
        return Err(FluidError::Parameter(format!("service rate must be > 0, got {mu}")));
    }
    if !(opts.sample_dt > 0.0) {
        return Err(FluidError::Parameter("sample_dt must be > 0".into()));
    }
    let depth = opts
        .depth
        .unwrap_or_else(|| default_depth(load.lambda_max() / mu, q0.top_level()));
    let q0 = q0.with_depth(depth)?;
    let ell0 = control.initial();
    if ell0 + 1 >= depth {
        return Err(FluidError::Depth { depth, needed: ell0 + 2 });
    }
    if let ThresholdControl::Adaptive { alpha, cap, .. } = control {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(FluidError::Parameter(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if cap.is_some_and(|c| ell0 > c) {
            return Err(FluidError::Precondition(format!("initial threshold {ell0} exceeds the cap")));
        }
        let (at, above) = (q0.level(ell0), q0.level(ell0 + 1));
        if !(at > alpha) || !(above < 1.0) {
            return Err(FluidError::Precondition(format!(
                "adaptive start needs q(l0) > alpha and q(l0+1) < 1, got q({ell0}) = {at}, q({}) = {above}",
                ell0 + 1
            )));
        }
    }
    check_truncation(&q0, 0.0, opts)?;

    let mut run = Run {
        control,
        mu,
        opts,
        t: 0.0,
        y: q0.into_vec(),
        threshold: ell0,
        depth,
    };
    let mut samples = vec![run.sample()];
    let mut switches = vec![Switch { t: 0.0, threshold: ell0 }];
    let mut next_sample = 1usize;
    let mut step = opts.sample_dt.min(1e-3).max(1e-9);

    while run.t < horizon {
        let grid_t = (next_sample as f64 * opts.sample_dt).min(horizon);
        let mut target = grid_t;
        if let Some(bp) = load.next_breakpoint(run.t) {
            target = target.min(bp);
        }
        let span = target - run.t;
        let h = step.min(span);
        let lambda = load.rate_at(run.t);
        let (y_new, err) = run.dp_step(h, lambda)?;
        if err > 1.0 {
            step = h * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if step < 1e-14 {
                return Err(FluidError::StepUnderflow { t: run.t });
            }
            continue;
        }
        let growth = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };

        if let Some(event) = run.first_event(&y_new, h, lambda)? {
                run.t += event.dt;
            run.y = FluidState::projected_conservative(event.y).into_vec();
            match event.kind {
                EventKind::Decrease => run.threshold -= 1,
                EventKind::Increase => run.threshold += 1,
                EventKind::Saturation => {}
            }
            if event.kind != EventKind::Saturation {
                switches.push(Switch { t: run.t, threshold: run.threshold });
                samples.push(run.sample());
            }
            // A decrease can land exactly on α at the next level down.
            while run.decrease_due(&run.y) {
                run.threshold -= 1;
                switches.push(Switch { t: run.t, threshold: run.threshold });
            }
            if switches.len() - 1 > opts.max_switches {
                return Err(FluidError::Accumulation { switches: switches.len() - 1, t: run.t });
            }
            check_truncation_raw(&run.y, run.t, opts)?;
            step = h.max(1e-6);
            continue;
        }

        run.t = if h == span { target } else { run.t + h };
        run.y = FluidState::projected_conservative(y_new).into_vec();
        check_truncation_raw(&run.y, run.t, opts)?;
        if run.t >= grid_t {
                samples.push(run.sample());
            next_sample += 1;
        }
        step = (h * growth).min(opts.sample_dt.max(h));
    }

    let last = *switches.last().expect("initial switch present");
    let settled = (horizon - last.t >= opts.settle_quiet).then_some((last.t, last.threshold));
    Ok(FluidTrajectory { samples, switches, settled, horizon, depth })
}

fn check_truncation(q: &FluidState, t: f64, opts: &IntegratorOptions) -> Result<(), FluidError> {
    check_truncation_raw(q.as_slice(), t, opts)
}

fn check_truncation_raw(y: &[f64], t: f64, opts: &IntegratorOptions) -> Result<(), FluidError> {
    let top = *y.last().expect("non-empty state");
    if top > opts.trunc_tol {
        return Err(FluidError::Truncation { t, depth: y.len() - 1, mass: top });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Decrease,
    Increase,
    Saturation,
}

struct Event {
    kind: EventKind,
    dt: f64,
    y: Vec<f64>,
}

struct Run<'a> {
    control: ThresholdControl,
    mu: f64,
    opts: &'a IntegratorOptions,
    t: f64,
    y: Vec<f64>,
    threshold: usize,
    depth: usize,
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
// Fifth- minus fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

impl Run<'_> {
    fn sample(&self) -> FluidSample {
        FluidSample { t: self.t, threshold: self.threshold, state: FluidState::projected(self.y.clone()) }
    }

    /// Routing is read off the projected stage, departures off the raw one,
    /// so the total mass obeys `u' = λ - μu` exactly along the numerical path.
    fn rhs(&self, y: &[f64], lambda: f64, case: RoutingCase) -> Result<Vec<f64>, FluidError> {
        let state = FluidState::projected(y.to_vec());
        let routing = routing_in_case(&state, self.threshold, lambda, self.mu, case)?;
        let n = y.len();
        Ok((0..n)
            .map(|i| {
                if i == 0 {
                    return 0.0;
                }
                let next = if i + 1 < n { y[i + 1] } else { 0.0 };
                lambda * routing.p[i] - self.mu * i as f64 * (y[i] - next)
            })
            .collect())
    }

    /// One Dormand–Prince step of length `h` from the current state; returns
    /// the fifth-order solution and the scaled error norm. The routing branch
    /// is the one in force at the start of the step.
    fn dp_step(&self, h: f64, lambda: f64) -> Result<(Vec<f64>, f64), FluidError> {
        let n = self.y.len();
        let case = classify(&FluidState::projected(self.y.clone()), self.threshold);
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        let mut stage = vec![0.0; n];
        for s in 0..7 {
            debug_assert!(C[s] <= 1.0);
            for i in 0..n {
                let mut acc = self.y[i];
                for (j, kj) in k.iter().enumerate() {
                    acc += h * A[s][j] * kj[i];
                }
                stage[i] = acc;
            }
            k.push(self.rhs(&stage, lambda, case)?);
        }
        let mut y_new = vec![0.0; n];
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut hi = self.y[i];
            let mut e = 0.0;
            for s in 0..7 {
                hi += h * B5[s] * k[s][i];
                e += h * E[s] * k[s][i];
            }
            y_new[i] = hi;
            let scale = self.opts.atol + self.opts.rtol * self.y[i].abs().max(hi.abs());
            err_sq += (e / scale).powi(2);
        }
        Ok((y_new, (err_sq / n as f64).sqrt()))
    }

    fn decrease_due(&self, y: &[f64]) -> bool {
        match self.control {
            ThresholdControl::Adaptive { alpha, .. } => self.threshold >= 1 && y[self.threshold] <= alpha,
            ThresholdControl::Static(_) => false,
        }
    }

    fn increase_allowed(&self) -> bool {
        match self.control {
            ThresholdControl::Adaptive { cap, .. } => {
                cap.is_none_or(|c| self.threshold < c) && self.threshold + 2 < self.depth
            }
            ThresholdControl::Static(_) => false,
        }
    }

    fn kinds_triggered(&self, y: &[f64]) -> [bool; 3] {
        let ell = self.threshold;
        let h = ell + 1;
        let full = |v: f64| v >= 1.0 - SATURATION_TOL;
        let dec = self.decrease_due(y);
        let inc = self.increase_allowed() && !full(self.y[h]) && full(y[h]);
        // Routing-branch changes that leave the threshold alone.
        let sat = (!full(self.y[ell]) && full(y[ell]))
            || (!self.increase_allowed() && full(self.y[ell]) && !full(self.y[h]) && full(y[h]));
        [dec, inc, sat]
    }

    /// Localizes the earliest switching event inside the accepted step, if any.
    fn first_event(&self, y_new: &[f64], h: f64, lambda: f64) -> Result<Option<Event>, FluidError> {
        let triggered = self.kinds_triggered(y_new);
        if !triggered.iter().any(|&b| b) {
            return Ok(None);
        }
        let kinds = [EventKind::Decrease, EventKind::Increase, EventKind::Saturation];
        let mut best: Option<Event> = None;
        for (idx, kind) in kinds.into_iter().enumerate() {
            if !triggered[idx] {
                continue;
            }
            let (mut lo, mut hi) = (0.0, h);
            let mut y_hi = y_new.to_vec();
            while hi - lo > self.opts.event_tol {
                let mid = 0.5 * (lo + hi);
                let (y_mid, _) = self.dp_step(mid, lambda)?;
                if self.kinds_triggered(&y_mid)[idx] {
                    hi = mid;
                    y_hi = y_mid;
                } else {
                    lo = mid;
                }
            }
            let replace = match &best {
                None => true,
                // Prefer the decrease when two switches coincide.
                Some(b) if (hi - b.dt).abs() <= self.opts.event_tol => {
                    kind == EventKind::Decrease && b.kind != EventKind::Decrease
                }
                Some(b) => hi < b.dt,
            };
            if replace {
                best = Some(Event { kind, dt: hi, y: y_hi });
            }
        }
        Ok(best)
    }
}
