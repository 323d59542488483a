//! Piecewise-constant per-pool arrival rate λ(t).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("schedule has no segments")]
    Empty,
    #[error("schedule must start at t=0, first segment starts at {0}")]
    BadStart(f64),
    #[error("segment start times must be strictly increasing (segment {index} starts at {start})")]
    NotIncreasing { index: usize, start: f64 },
    #[error("arrival rate must be finite and non-negative (segment {index} has {rate})")]
    BadRate { index: usize, rate: f64 },
    #[error("segment {index} rate {rate} exceeds the declared bound {bound}")]
    AboveBound { index: usize, rate: f64, bound: f64 },
}

/// One segment of a [`LoadSchedule`]: the rate `lambda` holds from `start`
/// until the next segment's start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub lambda: f64,
}

/// Piecewise-constant load λ(t), starting at t=0, bounded by `lambda_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSchedule {
    segments: Vec<Segment>,
    lambda_max: f64,
}

impl LoadSchedule {
    /// Validates the segment list. The bound defaults to the largest rate.
    pub fn new(segments: Vec<Segment>, lambda_max: Option<f64>) -> Result<Self, ScheduleError> {
        let first = segments.first().ok_or(ScheduleError::Empty)?;
        if first.start != 0.0 {
            return Err(ScheduleError::BadStart(first.start));
        }
        for (index, seg) in segments.iter().enumerate() {
            if !seg.lambda.is_finite() || seg.lambda < 0.0 {
                return Err(ScheduleError::BadRate { index, rate: seg.lambda });
            }
            if index > 0 && !(seg.start > segments[index - 1].start) {
                return Err(ScheduleError::NotIncreasing { index, start: seg.start });
            }
        }
        let peak = segments.iter().map(|s| s.lambda).fold(0.0, f64::max);
        let lambda_max = lambda_max.unwrap_or(peak);
        if let Some((index, seg)) = segments
            .iter()
            .enumerate()
            .find(|(_, s)| s.lambda > lambda_max)
        {
            return Err(ScheduleError::AboveBound { index, rate: seg.lambda, bound: lambda_max });
        }
        Ok(Self { segments, lambda_max })
    }

    pub fn constant(lambda: f64) -> Result<Self, ScheduleError> {
        Self::new(vec![Segment { start: 0.0, lambda }], None)
    }

    /// Builds a schedule from `(start, lambda)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)], lambda_max: Option<f64>) -> Result<Self, ScheduleError> {
        Self::new(
            pairs.iter().map(|&(start, lambda)| Segment { start, lambda }).collect(),
            lambda_max,
        )
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn is_constant(&self) -> bool {
        self.segments.len() == 1
    }

    fn index_at(&self, t: f64) -> usize {
        // partition_point returns the count of segments starting at or before t.
        self.segments.partition_point(|s| s.start <= t).saturating_sub(1)
    }

    /// λ(t); times before zero map to the first segment.
    pub fn rate_at(&self, t: f64) -> f64 {
        self.segments[self.index_at(t)].lambda
    }

    /// The first segment boundary strictly after `t`, if any.
    pub fn next_breakpoint(&self, t: f64) -> Option<f64> {
        self.segments.get(self.index_at(t) + 1).map(|s| s.start)
    }

    /// Segment start times after zero.
    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments.iter().skip(1).map(|s| s.start)
    }
}
