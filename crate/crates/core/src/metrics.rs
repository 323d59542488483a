//! Post-processing of sampled trajectories.

use std::collections::BTreeMap;
use std::io::Write;

use thiserror::Error;

use crate::des::SampledTrajectory;
use crate::fluid::ideal_occupancy;
use crate::schedule::LoadSchedule;

/// Default quiet window for [`detect_settling`].
pub const DEFAULT_SETTLING_QUIET: f64 = 20.0;

/// Fewest post-burn-in samples accepted by [`ou_diagnostics`].
pub const MIN_OU_SAMPLES: usize = 100;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("scaling mode {requested:?} does not match load {lambda}")]
    Mode { requested: ScalingMode, lambda: f64 },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("only {got} samples after burn-in, need {need}")]
    InsufficientData { got: usize, need: usize },
    #[error("no task-time in the window")]
    EmptyHistogram,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingMode {
    /// Non-integer load: log n deficit below ⌊λ⌋, √n fluctuation at ⌈λ⌉.
    Fractional,
    /// Integer load: √n deficit below λ.
    Integer,
}

impl ScalingMode {
    pub fn for_load(lambda: f64) -> Self {
        if lambda.fract() == 0.0 {
            Self::Integer
        } else {
            Self::Fractional
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScaledPaths {
    Fractional {
        t: Vec<f64>,
        /// `Σ_{i≤⌊λ⌋} (n − Q(i)) / ln n`
        y_bar: Vec<f64>,
        /// `(Q(⌈λ⌉) − (λ − ⌊λ⌋)n) / √n`
        z_bar: Vec<f64>,
        /// `Q(i)/√n` for `i > ⌈λ⌉`
        q_bar: BTreeMap<usize, Vec<f64>>,
    },
    Integer {
        t: Vec<f64>,
        /// `Σ_{i≤λ} (n − Q(i)) / √n`
        y_hat: Vec<f64>,
        /// `Q(i)/√n` for `i ≥ λ + 1`
        q_hat: BTreeMap<usize, Vec<f64>>,
    },
}

impl ScaledPaths {
    pub fn times(&self) -> &[f64] {
        match self {
            Self::Fractional { t, .. } | Self::Integer { t, .. } => t,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_writer(out);
        let (t, cols, upper): (&[f64], Vec<(String, &Vec<f64>)>, &BTreeMap<usize, Vec<f64>>) = match self {
            Self::Fractional { t, y_bar, z_bar, q_bar } => {
                (t, vec![("Y_bar".into(), y_bar), ("Z_bar".into(), z_bar)], q_bar)
            }
            Self::Integer { t, y_hat, q_hat } => (t, vec![("Y_hat".into(), y_hat)], q_hat),
        };
        let prefix = if matches!(self, Self::Fractional { .. }) { "Q_bar" } else { "Q_hat" };
        let mut header = vec!["t".to_string()];
        header.extend(cols.iter().map(|(n, _)| n.clone()));
        header.extend(upper.keys().map(|i| format!("{prefix}_{i}")));
        w.write_record(&header)?;
        for k in 0..t.len() {
            let mut row = vec![t[k].to_string()];
            row.extend(cols.iter().map(|(_, c)| c[k].to_string()));
            row.extend(upper.values().map(|c| c[k].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Diffusion-scaled paths of a constant-load trajectory, in the mode that
/// matches λ.
pub fn diffusion_scaled(traj: &SampledTrajectory, lambda: f64) -> Result<ScaledPaths, MetricsError> {
    diffusion_scaled_as(traj, lambda, ScalingMode::for_load(lambda))
}

/// As [`diffusion_scaled`] with an explicit mode; a mode that does not match
/// λ is an error.
pub fn diffusion_scaled_as(
    traj: &SampledTrajectory,
    lambda: f64,
    mode: ScalingMode,
) -> Result<ScaledPaths, MetricsError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(MetricsError::Input(format!("load must be finite and >= 0, got {lambda}")));
    }
    if mode != ScalingMode::for_load(lambda) {
        return Err(MetricsError::Mode { requested: mode, lambda });
    }
    if traj.n < 2 {
        return Err(MetricsError::Input("diffusion scaling needs n >= 2".into()));
    }
    let n = traj.n as f64;
    let sqrt_n = n.sqrt();
    let floor = lambda.floor() as usize;
    let top = traj.max_level();
    let t: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
    let deficit = |s: &crate::des::OccupancySample, upto: usize| -> f64 {
        (1..=upto).map(|i| (traj.n - s.at_least(i)) as f64).sum()
    };
    let upper_from = |first: usize| -> BTreeMap<usize, Vec<f64>> {
        (first..=top.max(first))
            .map(|i| (i, traj.samples.iter().map(|s| s.at_least(i) as f64 / sqrt_n).collect()))
            .collect()
    };
    Ok(match mode {
        ScalingMode::Fractional => {
            let ceil = floor + 1;
            let frac = lambda - lambda.floor();
            ScaledPaths::Fractional {
                y_bar: traj.samples.iter().map(|s| deficit(s, floor) / n.ln()).collect(),
                z_bar: traj
                    .samples
                    .iter()
                    .map(|s| (s.at_least(ceil) as f64 - frac * n) / sqrt_n)
                    .collect(),
                q_bar: upper_from(ceil + 1),
                t,
            }
        }
        ScalingMode::Integer => ScaledPaths::Integer {
            y_hat: traj.samples.iter().map(|s| deficit(s, floor) / sqrt_n).collect(),
            q_hat: upper_from(floor + 1),
            t,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuDiagnostics {
    pub samples: usize,
    pub mean: f64,
    pub variance: f64,
    pub lag: f64,
    /// Empirical autocorrelation at `lag`; reference `e^{−lag}`. NaN when degenerate.
    pub autocorrelation: f64,
    /// Zero variance: the series is constant.
    pub degenerate: bool,
}

/// Moments of a scaled fluctuation series after `burn_in`, to compare with a
/// stationary OU process (mean 0, variance λ, autocorrelation `e^{−Δ}`).
/// `lag` is rounded to a whole number of sample steps.
pub fn ou_diagnostics(t: &[f64], z: &[f64], burn_in: f64, lag: f64) -> Result<OuDiagnostics, MetricsError> {
    if t.len() != z.len() {
        return Err(MetricsError::Input("time and value series differ in length".into()));
    }
    let start = t.iter().position(|&s| s >= burn_in).unwrap_or(t.len());
    let (t, z) = (&t[start..], &z[start..]);
    if z.len() < MIN_OU_SAMPLES {
        return Err(MetricsError::InsufficientData { got: z.len(), need: MIN_OU_SAMPLES });
    }
    let m = z.len() as f64;
    let mean = z.iter().sum::<f64>() / m;
    let variance = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let dt = (t[t.len() - 1] - t[0]) / (m - 1.0);
    let k = if dt > 0.0 { (lag / dt).round() as usize } else { 0 };
    let degenerate = variance == 0.0;
    let autocorrelation = if degenerate || k >= z.len() {
        f64::NAN
    } else {
        let cov = (0..z.len() - k).map(|i| (z[i] - mean) * (z[i + k] - mean)).sum::<f64>() / (m - k as f64 - 1.0);
        cov / variance
    };
    Ok(OuDiagnostics { samples: z.len(), mean, variance, lag: k as f64 * dt, autocorrelation, degenerate })
}

/// Time-integrated share of resources per task: bin `k` holds the fraction of
/// task-time spent in pools with `k` tasks (each receiving share `1/k`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShareHistogram {
    pub bins: BTreeMap<usize, f64>,
}

impl ShareHistogram {
    /// Mass on the given pool sizes.
    pub fn mass_on(&self, levels: &[usize]) -> f64 {
        levels.iter().filter_map(|k| self.bins.get(k)).sum()
    }

    pub fn total(&self) -> f64 {
        self.bins.values().sum()
    }

    /// Two columns: `share = 1/k`, `mass`, by decreasing share.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["share", "mass"])?;
        for (k, m) in &self.bins {
            w.write_record([(1.0 / *k as f64).to_string(), m.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Share histogram over the whole trajectory.
pub fn resource_share_histogram(traj: &SampledTrajectory) -> Result<ShareHistogram, MetricsError> {
    resource_share_histogram_window(traj, f64::NEG_INFINITY, f64::INFINITY)
}

/// Share histogram over sample intervals inside `[from, to]`; each interval
/// uses the occupancy at its left end.
pub fn resource_share_histogram_window(
    traj: &SampledTrajectory,
    from: f64,
    to: f64,
) -> Result<ShareHistogram, MetricsError> {
    let mut bins: BTreeMap<usize, f64> = BTreeMap::new();
    for w in traj.samples.windows(2) {
        let (a, b) = (w[0].t.max(from), w[1].t.min(to));
        if b <= a {
            continue;
        }
        let dur = b - a;
        let s = &w[0];
        for k in 1..s.counts.len() {
            let pools = s.at_least(k) - s.at_least(k + 1);
            if pools > 0 {
                *bins.entry(k).or_default() += (k as u64 * pools) as f64 * dur;
            }
        }
    }
    let total: f64 = bins.values().sum();
    if !(total > 0.0) {
        return Err(MetricsError::EmptyHistogram);
    }
    bins.values_mut().for_each(|m| *m /= total);
    Ok(ShareHistogram { bins })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupancyError {
    pub t: f64,
    /// `‖q_n(t) − q*(λ(t))‖₂`
    pub e: f64,
    /// Highest occupied level.
    pub m: usize,
    pub lambda: f64,
}

/// Distance of each sample from the ideal occupancy at the current load.
pub fn occupancy_error(traj: &SampledTrajectory, schedule: &LoadSchedule) -> Vec<OccupancyError> {
    let n = traj.n as f64;
    traj.samples
        .iter()
        .map(|s| {
            let lambda = schedule.rate_at(s.t);
            let top = s.counts.len().saturating_sub(1);
            let depth = top.max(lambda.floor() as usize + 2);
            let ideal = ideal_occupancy(lambda, depth).expect("depth covers the ideal state");
            let e = (1..=depth)
                .map(|i| (s.at_least(i) as f64 / n - ideal.level(i)).powi(2))
                .sum::<f64>()
                .sqrt();
            let m = s.counts.iter().rposition(|&c| c > 0).unwrap_or(0);
            OccupancyError { t: s.t, e, m, lambda }
        })
        .collect()
}

pub fn write_occupancy_error_csv<W: Write>(rows: &[OccupancyError], out: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "lambda", "e", "m"])?;
    for r in rows {
        w.write_record([r.t.to_string(), r.lambda.to_string(), r.e.to_string(), r.m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `(t_eq, ℓ_eq)`: time and value of the last threshold change, provided the
/// threshold then stays unchanged for at least `quiet` until `horizon`.
/// Without any change the threshold counts as settled at time 0.
pub fn detect_settling(events: &[(f64, usize)], initial: usize, horizon: f64, quiet: f64) -> Option<(f64, usize)> {
    let (t_last, l) = events.last().copied().unwrap_or((0.0, initial));
    (horizon - t_last >= quiet).then_some((t_last, l))
}
