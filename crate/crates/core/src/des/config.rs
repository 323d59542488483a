use serde::{Deserialize, Serialize};

use super::occupancy::CountOccupancy;
use super::SimError;
use crate::schedule::LoadSchedule;

/// Dispatch policy. Threshold policies carry their own threshold settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    ThresholdStatic { threshold: usize },
    ThresholdAdaptive { initial: usize, alpha: f64 },
    Jsq,
    Random,
    PowerOfD { d: usize },
}

impl PolicyKind {
    pub fn is_threshold(&self) -> bool {
        matches!(self, Self::ThresholdStatic { .. } | Self::ThresholdAdaptive { .. })
    }

    pub fn initial_threshold(&self) -> Option<usize> {
        match *self {
            Self::ThresholdStatic { threshold } => Some(threshold),
            Self::ThresholdAdaptive { initial, .. } => Some(initial),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::ThresholdStatic { .. } => "threshold_static",
            Self::ThresholdAdaptive { .. } => "threshold_adaptive",
            Self::Jsq => "jsq",
            Self::Random => "random",
            Self::PowerOfD { .. } => "power_of_d",
        }
    }
}

/// Substream identifiers of the ChaCha generator. Arrivals and departures
/// draw from their own streams so that the total-task path does not depend
/// on the dispatch policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamIds {
    pub arrivals: u64,
    pub departures: u64,
    pub selection: u64,
}

impl Default for StreamIds {
    fn default() -> Self {
        Self { arrivals: 1, departures: 2, selection: 3 }
    }
}

/// Starting occupancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialOccupancy {
    Empty,
    /// Every pool holds `level` tasks.
    Uniform { level: usize },
    /// ⌊λ⌋ tasks everywhere and round((λ − ⌊λ⌋)n) pools with one more, at λ(0).
    Ideal,
    /// `Q(1), Q(2), ...`: pools with at least 1, 2, ... tasks.
    Counts { counts: Vec<u64> },
}

impl InitialOccupancy {
    pub fn build(&self, n: u64, lambda0: f64) -> Result<CountOccupancy, SimError> {
        let counts = match self {
            Self::Empty => vec![n],
            Self::Uniform { level } => vec![n; level + 1],
            Self::Ideal => {
                let f = lambda0.floor() as usize;
                let extra = ((lambda0 - lambda0.floor()) * n as f64).round() as u64;
                let mut c = vec![n; f + 1];
                c.push(extra);
                c
            }
            Self::Counts { counts } => {
                let mut c = vec![n];
                c.extend_from_slice(counts);
                c
            }
        };
        CountOccupancy::from_counts(counts)
            .ok_or_else(|| SimError::Config("initial counts must be non-increasing and at most n".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: u64,
    pub load: LoadSchedule,
    pub mu: f64,
    pub policy: PolicyKind,
    /// Upper limit for the learned threshold (no blocking).
    pub threshold_cap: Option<usize>,
    /// Pool buffer size `B`: arrivals to a pool holding `B` tasks are blocked,
    /// and the learned threshold never exceeds `B − 1`.
    pub capacity: Option<usize>,
    pub initial: InitialOccupancy,
    pub horizon: f64,
    pub sample_dt: f64,
    pub seed: u64,
    pub streams: StreamIds,
}

impl SimConfig {
    pub fn new(n: u64, load: LoadSchedule, policy: PolicyKind, horizon: f64, seed: u64) -> Self {
        Self {
            n,
            load,
            mu: 1.0,
            policy,
            threshold_cap: None,
            capacity: None,
            initial: InitialOccupancy::Empty,
            horizon,
            sample_dt: 0.1,
            seed,
            streams: StreamIds::default(),
        }
    }

    /// Effective cap on the threshold from both `threshold_cap` and `capacity`.
    pub fn effective_cap(&self) -> Option<usize> {
        let from_capacity = self.capacity.map(|b| b.saturating_sub(1));
        match (self.threshold_cap, from_capacity) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return bad(format!("service rate must be finite and > 0, got {}", self.mu));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return bad(format!("horizon must be finite and >= 0, got {}", self.horizon));
        }
        if !(self.sample_dt > 0.0) || !self.sample_dt.is_finite() {
            return bad(format!("sample_dt must be finite and > 0, got {}", self.sample_dt));
        }
        if self.capacity == Some(0) {
            return bad("capacity must be at least 1".into());
        }
        let s = self.streams;
        if s.arrivals == s.departures || s.arrivals == s.selection || s.departures == s.selection {
            return bad("stream ids must be distinct".into());
        }
        match self.policy {
            PolicyKind::ThresholdAdaptive { alpha, initial } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return bad(format!("alpha must lie in (0, 1), got {alpha}"));
                }
                if let Some(cap) = self.effective_cap() {
                    if initial > cap {
                        return bad(format!("initial threshold {initial} exceeds cap {cap}"));
                    }
                }
            }
            PolicyKind::PowerOfD { d } if d == 0 => return bad("power-of-d needs d >= 1".into()),
            _ => {}
        }
        Ok(())
    }
}
